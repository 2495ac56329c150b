#include "ustlab/parallel.hpp"

#include <cstdlib>
#include <string>

namespace ustlab {

unsigned default_workers() noexcept {
  if (const char* env = std::getenv("USTLAB_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace ustlab
