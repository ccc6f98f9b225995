#pragma once

#include <stdexcept>
#include <string>

namespace diffusec {

class Error : public std::runtime_error {
  public:
	using std::runtime_error::runtime_error;
};

#define DIFFUSEC_ERROR(Name)                                                                                           \
	class Name : public Error {                                                                                        \
	  public:                                                                                                          \
		using Error::Error;                                                                                            \
	}

DIFFUSEC_ERROR(ShapeError);
DIFFUSEC_ERROR(ConfigError);
DIFFUSEC_ERROR(TimestepError);
DIFFUSEC_ERROR(PlanError);
DIFFUSEC_ERROR(DataError);
DIFFUSEC_ERROR(DivergenceError);
DIFFUSEC_ERROR(MeasurementError);
DIFFUSEC_ERROR(IoError);
// sync protocol
DIFFUSEC_ERROR(ProtocolError);
DIFFUSEC_ERROR(IncompleteError);
DIFFUSEC_ERROR(UnsupportedError);
DIFFUSEC_ERROR(ConstraintError);
DIFFUSEC_ERROR(FrameError);
DIFFUSEC_ERROR(HandshakeError);

#undef DIFFUSEC_ERROR

} // namespace diffusec
