#pragma once

// Numeric element type of the tensor engine and the network.
//
// The shipped library is single precision. The numeric sources can also be
// compiled with CXR_DOUBLE_PRECISION into a separate library (inline
// namespace f64) so that finite-difference gradient checks are not dominated
// by float rounding. Both variants can be linked into one binary.

#ifdef CXR_DOUBLE_PRECISION
#define CXR_NUMERIC_NS f64
#else
#define CXR_NUMERIC_NS f32
#endif

namespace cxr {
inline namespace CXR_NUMERIC_NS {

#ifdef CXR_DOUBLE_PRECISION
using Scalar = double;
#else
using Scalar = float;
#endif

}  // namespace CXR_NUMERIC_NS
}  // namespace cxr
