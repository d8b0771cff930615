#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "impvote/scm.hpp"

namespace impvote {

/// Multi-environment tabular data keyed by environment label.
struct Dataset {
    std::vector<std::string> feature_names;
    std::string target_name;
    std::vector<EnvSample> samples;  // env_id carries the label

    int d() const {
        return samples.empty() ? 0 : samples.front().d();
    }
};

// Splits CSV rows by environment label; truncates each environment to
// its first max_rows_per_env rows when given. Environments with fewer
// than d+3 rows are rejected by name. Parse errors cite row/column.
Dataset ingest_csv(const std::string& path, const std::string& env_column,
                   const std::string& target_column,
                   const std::optional<std::vector<std::string>>& feature_columns,
                   std::optional<int> max_rows_per_env);

// Inverse of ingest_csv: header `env,<features...>,<target>`.
void export_csv(std::ostream& out, const Dataset& dataset);

// Plain sample export, header `env,x1,...,xd,y`.
void write_samples_csv(std::ostream& out, const std::vector<EnvSample>& samples);

// FNV-1a 64 over the raw bytes of a file; stable reproducibility digest.
std::uint64_t file_digest(const std::string& path);

}  // namespace impvote
