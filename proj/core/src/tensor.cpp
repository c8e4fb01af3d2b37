#include "edgeseg/tensor.hpp"

#include <cmath>

namespace edgeseg {

template <class T>
bool all_finite(const TensorT<T>& t) {
  for (const T v : t.data) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

template bool all_finite<float>(const TensorT<float>&);
template bool all_finite<double>(const TensorT<double>&);

}  // namespace edgeseg
