#include "jsonio.hpp"

#include <fstream>

namespace projpost {

Json arch_to_json(const ArchitectureSpec& spec) {
    Json j;
    j["input_dim"] = spec.input_dim;
    j["hidden"] = spec.hidden_widths;
    j["output_dim"] = spec.output_dim;
    Json acts = Json::array();
    for (ActivationKind a : spec.activations) acts.push_back(to_string(a));
    j["activation"] = acts;
    Json bias = Json::array();
    for (bool b : spec.bias) bias.push_back(b);
    j["bias"] = bias;
    return j;
}

ArchitectureSpec arch_from_json(const Json& j) {
    try {
        ArchitectureSpec spec;
        spec.input_dim = j.at("input_dim").get<int>();
        spec.output_dim = j.at("output_dim").get<int>();
        if (j.contains("hidden")) spec.hidden_widths = j.at("hidden").get<std::vector<int>>();

        const Json& act = j.contains("activation") ? j.at("activation") : Json("tanh");
        if (act.is_string()) {
            spec.activations.assign(spec.hidden_widths.size(),
                                    activation_from_string(act.get<std::string>()));
        } else {
            for (const Json& a : act)
                spec.activations.push_back(activation_from_string(a.get<std::string>()));
        }

        const Json& bias = j.contains("bias") ? j.at("bias") : Json(true);
        if (bias.is_boolean()) {
            spec.bias.assign(size_t(spec.layer_count()), bias.get<bool>());
        } else {
            for (const Json& b : bias) spec.bias.push_back(b.get<bool>());
        }
        spec.validate();
        return spec;
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("bad architecture descriptor: ") + e.what());
    }
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigError("bad JSON in " + path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const Json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace projpost
