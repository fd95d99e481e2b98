#include "fsw/prompt.hpp"

#include "fsw/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>

namespace fsw::prompt {

using nlohmann::json;

std::string variant_name(Variant v) {
    return v == Variant::PV1 ? "PV1" : "PV2";
}

Variant variant_from_name(const std::string& name) {
    if (name == "PV1" || name == "pv1") {
        return Variant::PV1;
    }
    if (name == "PV2" || name == "pv2") {
        return Variant::PV2;
    }
    throw std::invalid_argument("unknown prompt variant: " + name);
}

std::string render_steps(const expr::Trace& trace, Variant variant) {
    std::string out = "Steps:";
    if (variant == Variant::PV1) {
        out += " [";
        for (const expr::Step& s : trace.steps) {
            out += expr::to_string(s);
            out += ", ";
        }
        out += std::to_string(trace.final_value);
        out += ']';
        return out;
    }
    out += '\n';
    for (const expr::Step& s : trace.steps) {
        out += expr::to_string(s);
        out += '\n';
    }
    out += std::to_string(trace.final_value);
    return out;
}

const std::string& system_prompt_text() {
    static const std::string text =
        "You are a Math expert. Provide concise answers about mathematical "
        "formulas writing only the steps and then the result starting a new "
        "line for each of the computations for the resolution. The format "
        "should be as in the following examples:\n"
        "\n"
        "(3+5)*5:\n"
        "3 + 5 = 8\n"
        "8 * 5 = 40\n"
        "40\n";
    return text;
}

const char* system_prompt_version() { return "sys-v1"; }

PromptBundle build_prompt(const std::string& target_expression,
                          const std::vector<Shot>& shots, Variant variant,
                          bool cot) {
    const std::string target = expr::render(expr::parse(target_expression));
    PromptBundle bundle;
    bundle.system_text = system_prompt_text();
    bundle.cot = cot;
    std::string& user = bundle.user_text;
    if (!shots.empty()) {
        user += "Q: Given the following examples:\n";
        for (size_t i = 0; i < shots.size(); ++i) {
            user += "Computations example" + std::to_string(i + 1) + ":\n";
            user += "Expression: " + shots[i].expression + "\n";
            user += render_steps(shots[i].trace, variant);
            user += "\n\n";
        }
        user += "Simplify the following expression " + target +
                " where + has priority over *.";
    } else {
        user += "Q: Simplify the following expression " + target +
                " where + has priority over *.";
    }
    if (cot) {
        user += '\n';
        user += kCotLine;
    }
    return bundle;
}

std::string bundle_to_json(const PromptBundle& bundle) {
    return json{{"system", bundle.system_text}, {"user", bundle.user_text}}
        .dump();
}

void write_shots(const std::filesystem::path& path,
                 const std::vector<Shot>& shots) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    for (const Shot& shot : shots) {
        json steps = json::array();
        for (const expr::Step& s : shot.trace.steps) {
            steps.push_back(expr::to_string(s));
        }
        json j{{"expression", shot.expression},
               {"steps", steps},
               {"final", shot.trace.final_value}};
        if (!shot.source_dataset.empty()) {
            j["source"] = {{"dataset", shot.source_dataset},
                           {"record_id", shot.source_record_id}};
        }
        out << j.dump() << '\n';
    }
}

std::vector<Shot> load_shots(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open shot set: " + path.string());
    }
    std::vector<Shot> shots;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error(path.string() + ":" +
                                     std::to_string(lineno) + ": " + e.what());
        }
        Shot shot;
        shot.expression = j.at("expression").get<std::string>();
        shot.trace.final_value = j.at("final").get<int64_t>();
        for (const auto& sj : j.at("steps")) {
            expr::Step s;
            if (!expr::parse_step(sj.get<std::string>(), s)) {
                throw std::runtime_error(path.string() + ":" +
                                         std::to_string(lineno) +
                                         ": malformed step");
            }
            shot.trace.steps.push_back(s);
        }
        if (j.contains("source")) {
            shot.source_dataset = j["source"].value("dataset", "");
            shot.source_record_id = j["source"].value("record_id", -1);
        }
        shots.push_back(std::move(shot));
    }
    return shots;
}

} // namespace fsw::prompt
