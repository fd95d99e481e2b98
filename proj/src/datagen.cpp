#include "fsw/datagen.hpp"

#include "fsw/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>
#include <unordered_set>

namespace fsw::datagen {

using nlohmann::json;

void validate(const GenParams& params) {
    if (params.depth < 1) {
        throw std::invalid_argument("depth must be >= 1");
    }
    if (params.prob < 1) {
        throw std::invalid_argument("prob must be >= 1");
    }
    if (params.count < 1) {
        throw std::invalid_argument("count must be >= 1");
    }
}

RootRule root_rule_from_name(const std::string& name) {
    if (name == "strict") {
        return RootRule::strict;
    }
    if (name == "draft") {
        return RootRule::draft;
    }
    throw std::invalid_argument("unknown root rule: " + name);
}

std::string root_rule_name(RootRule rule) {
    return rule == RootRule::strict ? "strict" : "draft";
}

double BranchProbs::for_child_count(int k) const {
    switch (k) {
    case 2: return p1;
    case 3: return p2;
    case 4: return p3;
    case 5: return p4;
    default: return 0.0;
    }
}

namespace {

// ceil(prob * 0.3) in exact integer arithmetic.
int ceil_three_tenths(int prob) {
    return (3 * prob + 9) / 10;
}

double min1(double x) { return x < 1.0 ? x : 1.0; }

} // namespace

BranchProbs branch_probabilities(int prob, bool at_root, RootRule rule) {
    if (prob < 1) {
        throw std::invalid_argument("prob must be >= 1");
    }
    const double p = static_cast<double>(prob);
    BranchProbs b;
    b.p4 = min1(1.0 / p);
    b.p3 = (1.0 - b.p4) * min1(2.0 / p);
    if (at_root) {
        if (rule == RootRule::strict) {
            // Roots carry at least two operators: only 3 or 4 children.
            b.p4 = 0.0;
            b.p3 = min1(2.0 / p);
            b.p2 = 1.0 - b.p3;
            b.p1 = 0.0;
            return b;
        }
        // draft: apply the override assignments in sequence, then the
        // downstream formulas with the updated values.
        b.p3 = 1.0 - b.p4 - b.p3;
        b.p4 = 0.0;
    }
    b.p2 = (1.0 - b.p4 - b.p3) *
           min1(static_cast<double>(ceil_three_tenths(prob)) / p);
    b.p1 = 1.0 - b.p4 - b.p3 - b.p2;
    return b;
}

expr::Expr generate_expr(const GenParams& params, Rng& rng, int d,
                         RootRule rule) {
    if (d >= params.depth) {
        return expr::Expr::leaf(static_cast<int>(rng.uniform_int(0, 9)));
    }
    const bool at_root = d == 0;
    const BranchProbs b = branch_probabilities(params.prob, at_root, rule);
    const double u = rng.uniform_real01();
    int k;
    if (at_root && rule == RootRule::strict) {
        k = u < b.p3 ? 4 : 3;
    } else if (u < b.p4) {
        k = 5;
    } else if (u < b.p4 + b.p3) {
        k = 4;
    } else if (u < b.p4 + b.p3 + b.p2) {
        k = 3;
    } else {
        k = 2;
    }
    std::vector<expr::Op> ops;
    ops.reserve(static_cast<size_t>(k) - 1);
    for (int i = 0; i < k - 1; ++i) {
        ops.push_back(rng.uniform_int(0, 1) == 0 ? expr::Op::Add
                                                 : expr::Op::Mul);
    }
    std::vector<expr::Expr> children;
    children.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        children.push_back(generate_expr(params, rng, d + 1, rule));
    }
    return expr::Expr::node(std::move(children), std::move(ops));
}

std::vector<DatasetRecord> generate_dataset(const GenParams& params,
                                            const GenOptions& options) {
    validate(params);
    Rng rng(params.seed);
    std::vector<DatasetRecord> records;
    records.reserve(static_cast<size_t>(params.count));
    std::unordered_set<std::string> seen;
    // Dedup can in principle stall on a tiny expression space; bail out
    // instead of spinning forever.
    const long max_draws = 1000L * params.count;
    long draws = 0;
    while (records.size() < static_cast<size_t>(params.count)) {
        if (++draws > max_draws) {
            throw std::runtime_error(
                "dedup exhausted the draw budget; expression space too small");
        }
        const expr::Expr e = generate_expr(params, rng, 0, options.root_rule);
        DatasetRecord rec;
        rec.expression = expr::render(e);
        if (options.dedup && !seen.insert(rec.expression).second) {
            continue;
        }
        rec.id = static_cast<int>(records.size());
        rec.trace = expr::evaluate(e, expr::PrecedencePolicy::non_standard());
        rec.final_value = rec.trace.final_value;
        rec.params = params;
        records.push_back(std::move(rec));
    }
    return records;
}

namespace {

json params_to_json(const GenParams& params) {
    return json{{"depth", params.depth},
                {"prob", params.prob},
                {"seed", params.seed},
                {"count", params.count}};
}

GenParams params_from_json(const json& j) {
    GenParams p;
    p.depth = j.at("depth").get<int>();
    p.prob = j.at("prob").get<int>();
    p.seed = j.at("seed").get<uint64_t>();
    p.count = j.at("count").get<int>();
    return p;
}

} // namespace

std::string record_to_json_line(const DatasetRecord& record) {
    json steps = json::array();
    for (const expr::Step& s : record.trace.steps) {
        steps.push_back(expr::to_string(s));
    }
    const json j{{"id", record.id},
                 {"expression", record.expression},
                 {"steps", steps},
                 {"final", record.final_value},
                 {"params", params_to_json(record.params)}};
    return j.dump();
}

void write_dataset(const std::filesystem::path& path,
                   const std::vector<DatasetRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    for (const DatasetRecord& rec : records) {
        out << record_to_json_line(rec) << '\n';
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open dataset: " + path.string());
    }
    std::vector<DatasetRecord> records;
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
        DatasetRecord rec;
        rec.id = j.at("id").get<int>();
        rec.expression = j.at("expression").get<std::string>();
        rec.final_value = j.at("final").get<int64_t>();
        rec.params = params_from_json(j.at("params"));
        for (const auto& sj : j.at("steps")) {
            expr::Step s;
            if (!expr::parse_step(sj.get<std::string>(), s)) {
                throw std::runtime_error(path.string() + ":" +
                                         std::to_string(lineno) +
                                         ": malformed step");
            }
            rec.trace.steps.push_back(s);
        }
        rec.trace.final_value = rec.final_value;
        records.push_back(std::move(rec));
    }
    return records;
}

std::string dataset_id(const GenParams& params) {
    return "db_d" + std::to_string(params.depth) + "_p" +
           std::to_string(params.prob) + "_s" + std::to_string(params.seed);
}

std::string dataset_filename(const GenParams& params) {
    return dataset_id(params) + ".jsonl";
}

std::vector<Preset> paper_presets() {
    auto make = [](int depth, int prob) {
        Preset p;
        p.name = "db(" + std::to_string(depth) + "," + std::to_string(prob) + ")";
        p.params = GenParams{depth, prob, 1, 200};
        return p;
    };
    // The published list plus the (3,20) configuration the result tables use.
    return {make(1, 6), make(2, 20), make(2, 10),
            make(2, 6), make(3, 6), make(3, 20)};
}

} // namespace fsw::datagen
