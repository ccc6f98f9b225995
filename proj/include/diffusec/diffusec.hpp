#pragma once

#include "diffusec/agent_training.hpp"
#include "diffusec/artifacts.hpp"
#include "diffusec/channel.hpp"
#include "diffusec/checkpoint.hpp"
#include "diffusec/classifier.hpp"
#include "diffusec/codec.hpp"
#include "diffusec/config.hpp"
#include "diffusec/dataset.hpp"
#include "diffusec/ddpg.hpp"
#include "diffusec/denoiser_training.hpp"
#include "diffusec/dense_net.hpp"
#include "diffusec/diffusion.hpp"
#include "diffusec/error.hpp"
#include "diffusec/experiment.hpp"
#include "diffusec/io.hpp"
#include "diffusec/metrics.hpp"
#include "diffusec/optimizer.hpp"
#include "diffusec/pgd.hpp"
#include "diffusec/pipeline.hpp"
#include "diffusec/rng.hpp"
#include "diffusec/schedule.hpp"
#include "diffusec/ssim.hpp"
#include "diffusec/sync.hpp"
#include "diffusec/tensor.hpp"
