#include "fsw/report.hpp"

#include "fsw/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

namespace fsw::report {

using nlohmann::json;

std::string format_cell(double mean, double std_dev) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f \xC2\xB1 %.3f", mean, std_dev);
    return buf;
}

void write_report(const std::filesystem::path& path,
                  const loop::RunReport& report) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write report: " + path.string());
    }
    out << report.to_json().dump(2) << '\n';
}

loop::RunReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open report: " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    return loop::RunReport::from_json(j);
}

std::string summary_row(const loop::RunReport& report) {
    return report.dataset_id + " | " + report.regime + " | " +
           format_cell(report.mean, report.std_dev);
}

namespace {

// Reports sharing one table must agree on everything but dataset/regime.
struct TableKey {
    std::string variant;
    bool cot;
    std::string backend_id;

    auto operator<=>(const TableKey&) const = default;
};

TableKey table_key(const loop::RunReport& r) {
    return TableKey{r.variant, r.cot, r.backend_id};
}

std::string table_title(const TableKey& key) {
    std::string title = "variant=" + key.variant;
    title += key.cot ? " cot=on" : " cot=off";
    title += " backend=" + key.backend_id;
    return title;
}

const std::vector<std::string>& regime_order() {
    static const std::vector<std::string> order{"zero", "random", "is", "ise"};
    return order;
}

bool regime_less(const std::string& a, const std::string& b) {
    const auto& order = regime_order();
    const auto ia = std::find(order.begin(), order.end(), a);
    const auto ib = std::find(order.begin(), order.end(), b);
    if (ia != ib) {
        return ia < ib;
    }
    return a < b;
}

} // namespace

std::string render_tables(const std::vector<loop::RunReport>& reports) {
    std::map<TableKey, std::map<std::string, std::map<std::string,
                                                      const loop::RunReport*>>>
        tables; // key -> dataset -> regime -> report
    for (const loop::RunReport& r : reports) {
        auto& cell = tables[table_key(r)][r.dataset_id][r.regime];
        if (cell != nullptr) {
            if (cell->fingerprint != r.fingerprint) {
                throw SchemaMismatchError(
                    "conflicting reports for cell (" + r.dataset_id + ", " +
                    r.regime + "): fingerprints differ");
            }
            throw SchemaMismatchError("duplicate report for cell (" +
                                      r.dataset_id + ", " + r.regime + ")");
        }
        cell = &r;
    }

    std::string out;
    for (const auto& [key, datasets] : tables) {
        // column set = union of regimes in this table, in canonical order
        std::vector<std::string> regimes;
        for (const auto& [dataset, cells] : datasets) {
            for (const auto& [regime, rep] : cells) {
                if (std::find(regimes.begin(), regimes.end(), regime) ==
                    regimes.end()) {
                    regimes.push_back(regime);
                }
            }
        }
        std::sort(regimes.begin(), regimes.end(), regime_less);

        size_t name_width = std::string("dataset").size();
        for (const auto& [dataset, cells] : datasets) {
            name_width = std::max(name_width, dataset.size());
        }
        constexpr size_t cell_width = 15; // fits "0.000 ± 0.000"

        auto pad = [](std::string s, size_t width) {
            if (s.size() < width) {
                s.append(width - s.size(), ' ');
            }
            return s;
        };
        // the ± glyph is two bytes but one column
        auto pad_cell = [&](std::string s) {
            const size_t visual = s.size() - (s.find("\xC2\xB1") !=
                                                      std::string::npos
                                                  ? 1
                                                  : 0);
            if (visual < cell_width) {
                s.append(cell_width - visual, ' ');
            }
            return s;
        };

        out += "== " + table_title(key) + " ==\n";
        out += pad("dataset", name_width);
        for (const auto& regime : regimes) {
            out += " | " + pad(regime, cell_width);
        }
        out += '\n';
        for (const auto& [dataset, cells] : datasets) {
            out += pad(dataset, name_width);
            for (const auto& regime : regimes) {
                const auto it = cells.find(regime);
                const std::string cell =
                    it == cells.end()
                        ? std::string("-")
                        : format_cell(it->second->mean, it->second->std_dev);
                out += " | " + pad_cell(cell);
            }
            out += '\n';
        }
        out += '\n';
    }
    return out;
}

std::string render_csv(const std::vector<loop::RunReport>& reports) {
    std::string out = "dataset,regime,variant,cot,backend,run,accuracy\n";
    for (const loop::RunReport& r : reports) {
        for (size_t run = 0; run < r.per_run_accuracy.size(); ++run) {
            char acc[32];
            std::snprintf(acc, sizeof acc, "%.6f", r.per_run_accuracy[run]);
            out += r.dataset_id + ',' + r.regime + ',' + r.variant + ',' +
                   (r.cot ? "true" : "false") + ',' + '"' + r.backend_id +
                   '"' + ',' + std::to_string(run + 1) + ',' + acc + '\n';
        }
    }
    return out;
}

} // namespace fsw::report
