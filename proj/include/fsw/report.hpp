#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fsw/loop.hpp"

namespace fsw::report {

class SchemaMismatchError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// "0.480 ± 0.008" — three decimals, the cell format of the result tables.
std::string format_cell(double mean, double std_dev);

void write_report(const std::filesystem::path& path,
                  const loop::RunReport& report);
loop::RunReport load_report(const std::filesystem::path& path);

/// One line: "dataset | regime | mean ± std".
std::string summary_row(const loop::RunReport& report);

/// Reports grouped into datasets x regimes tables; reports that differ in
/// prompt variant, cot, backend, or system prompt land in separate tables.
/// Two reports claiming the same cell with different fingerprints conflict
/// and raise SchemaMismatchError.
std::string render_tables(const std::vector<loop::RunReport>& reports);

/// One CSV row per (dataset, regime, run).
std::string render_csv(const std::vector<loop::RunReport>& reports);

} // namespace fsw::report
