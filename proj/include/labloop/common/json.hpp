#pragma once

#include <json.hpp>

namespace labloop {

// Keys are kept sorted (std::map), so dump() is canonical for identical values.
using Json = nlohmann::json;

}  // namespace labloop
