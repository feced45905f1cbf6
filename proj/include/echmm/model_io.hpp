#pragma once

#include "echmm/model.hpp"

#include <string>

namespace echmm {

/// One JSON document per model. Doubles are written in shortest round-trip
/// form, so save/load is lossless.
std::string params_to_json(const ModelParams& params);
ModelParams params_from_json(const std::string& text);

void save_params(const ModelParams& params, const std::string& path);
ModelParams load_params(const std::string& path);

}  // namespace echmm
