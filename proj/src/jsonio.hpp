#pragma once

#include <json.hpp>
#include <string>

#include "netcore.hpp"

namespace projpost {

using Json = nlohmann::json;

// Canonical architecture descriptor, e.g.
//   {"input_dim":2,"hidden":[16,16],"output_dim":2,
//    "activation":["tanh","tanh"],"bias":[true,true,true]}
// When parsing, "activation" may be a single string (applied to every hidden
// layer) and "bias" a single bool (applied to every layer).
Json arch_to_json(const ArchitectureSpec& spec);
ArchitectureSpec arch_from_json(const Json& j);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

}  // namespace projpost
