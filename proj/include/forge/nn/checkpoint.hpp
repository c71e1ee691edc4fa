#pragma once

#include <vector>

#include "forge/container.hpp"
#include "forge/nn/layers.hpp"

namespace forge::nn {

inline void save_params(Container& c, const std::vector<ParamRef>& params) {
  for (const auto& p : params) c.put(p.name, *p.value);
}

// Loads by name with exact shape checking; a checkpoint built for a different
// architecture fails with ParamsError.
inline void load_params(const Container& c, const std::vector<ParamRef>& params) {
  for (const auto& p : params) {
    *p.value = c.get_matrix(p.name, static_cast<int>(p.value->rows()),
                            static_cast<int>(p.value->cols()));
  }
}

}  // namespace forge::nn
