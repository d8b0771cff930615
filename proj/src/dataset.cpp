#include "impvote/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "impvote/errors.hpp"

namespace impvote {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

double parse_number(const std::string& text, int row, const std::string& col) {
    const char* begin = text.data();
    const char* end = begin + text.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (end[-1] == ' ' || end[-1] == '\t' ||
                           end[-1] == '\r'))
        --end;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw InvalidArgument("csv parse error at row " + std::to_string(row) +
                              ", column '" + col + "': non-numeric value '" +
                              text + "'");
    return value;
}

std::string strip(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && s[i] == ' ') ++i;
    return s.substr(i);
}

}  // namespace

Dataset ingest_csv(const std::string& path, const std::string& env_column,
                   const std::string& target_column,
                   const std::optional<std::vector<std::string>>& feature_columns,
                   std::optional<int> max_rows_per_env) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line))
        throw InvalidArgument("empty file: " + path);
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = strip(h);

    auto find_col = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw InvalidArgument("missing column '" + name + "' in " + path);
        return static_cast<int>(it - header.begin());
    };
    const int env_idx = find_col(env_column);
    const int target_idx = find_col(target_column);

    std::vector<int> feature_idx;
    Dataset out;
    if (feature_columns) {
        for (const auto& name : *feature_columns) {
            const int idx = find_col(name);
            if (idx == env_idx || idx == target_idx)
                throw InvalidArgument("feature column '" + name +
                                      "' clashes with env/target column");
            feature_idx.push_back(idx);
            out.feature_names.push_back(name);
        }
    } else {
        for (int i = 0; i < static_cast<int>(header.size()); ++i) {
            if (i == env_idx || i == target_idx) continue;
            feature_idx.push_back(i);
            out.feature_names.push_back(header[i]);
        }
    }
    out.target_name = header[target_idx];
    const int d = static_cast<int>(feature_idx.size());
    if (d < 1) throw InvalidArgument("no feature columns in " + path);

    struct Rows {
        std::vector<std::vector<double>> x;
        std::vector<double> y;
    };
    std::map<std::string, Rows> by_env;  // ordered by label
    std::vector<std::string> env_order;  // first-seen order
    int row_number = 1;
    while (std::getline(in, line)) {
        ++row_number;
        if (strip(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw InvalidArgument("csv parse error at row " +
                                  std::to_string(row_number) +
                                  ": expected " +
                                  std::to_string(header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
        const std::string env = strip(fields[env_idx]);
        auto [it, inserted] = by_env.try_emplace(env);
        if (inserted) env_order.push_back(env);
        Rows& rows = it->second;
        if (max_rows_per_env &&
            static_cast<int>(rows.y.size()) >= *max_rows_per_env)
            continue;  // first-n semantics per environment
        std::vector<double> xrow(d);
        for (int c = 0; c < d; ++c)
            xrow[c] =
                parse_number(fields[feature_idx[c]], row_number,
                             out.feature_names[c]);
        rows.x.push_back(std::move(xrow));
        rows.y.push_back(
            parse_number(fields[target_idx], row_number, out.target_name));
    }

    if (by_env.size() < 2)
        throw InvalidArgument("need at least 2 environments, found " +
                              std::to_string(by_env.size()));

    for (const auto& env : env_order) {
        const Rows& rows = by_env.at(env);
        const int n = static_cast<int>(rows.y.size());
        if (n < d + 3)
            throw InvalidArgument("environment '" + env + "' has only " +
                                  std::to_string(n) +
                                  " rows; need at least d+3 = " +
                                  std::to_string(d + 3));
        EnvSample sample;
        sample.env_id = env;
        sample.x.resize(n, d);
        sample.y.resize(n);
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < d; ++c) sample.x(i, c) = rows.x[i][c];
            sample.y[i] = rows.y[i];
        }
        out.samples.push_back(std::move(sample));
    }
    return out;
}

void export_csv(std::ostream& out, const Dataset& dataset) {
    out << "env";
    for (const auto& name : dataset.feature_names) out << "," << name;
    out << "," << dataset.target_name << "\n";
    out.precision(17);
    for (const auto& sample : dataset.samples) {
        for (int i = 0; i < sample.n(); ++i) {
            out << sample.env_id;
            for (int c = 0; c < sample.d(); ++c) out << "," << sample.x(i, c);
            out << "," << sample.y[i] << "\n";
        }
    }
}

void write_samples_csv(std::ostream& out,
                       const std::vector<EnvSample>& samples) {
    Dataset ds;
    ds.target_name = "y";
    if (!samples.empty())
        for (int c = 0; c < samples.front().d(); ++c)
            ds.feature_names.push_back("x" + std::to_string(c + 1));
    ds.samples = samples;
    export_csv(out, ds);
}

std::uint64_t file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open file: " + path);
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 0x100000001b3ULL;
        }
    }
    return hash;
}

}  // namespace impvote
