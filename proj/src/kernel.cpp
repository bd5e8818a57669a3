#include "kse/kernel.hpp"

#include <cmath>
#include <sstream>

namespace kse {

KernelParams validate_params(double gamma, double sigma) {
  if (!std::isfinite(gamma)) throw ConfigError("gamma must be finite");
  if (!std::isfinite(sigma)) throw ConfigError("sigma must be finite");
  if (gamma <= 0.0 || gamma > 2.0) {
    std::ostringstream os;
    os << "gamma out of (0,2]: " << gamma;
    throw ConfigError(os.str());
  }
  if (sigma <= 0.0) {
    std::ostringstream os;
    os << "sigma must be positive: " << sigma;
    throw ConfigError(os.str());
  }
  return KernelParams{gamma, sigma};
}

}  // namespace kse
