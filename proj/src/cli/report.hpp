#pragma once

#include <filesystem>

#include <json.hpp>

#include "augkit/cli.hpp"
#include "augkit/dist_metrics.hpp"

namespace augkit::cli {

nlohmann::ordered_json toolkit_json();
/// File name plus FNV-1a 64 content hash, so reports do not depend on where
/// the inputs live.
nlohmann::ordered_json file_identity(const std::filesystem::path& path);
/// Config without the worker count, which never changes any value.
nlohmann::ordered_json config_echo(const Config& config);
distmetrics::LayerWeights load_layer_weights(const std::filesystem::path& path);

}  // namespace augkit::cli
