#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "io.hpp"

namespace pdelin {

/// A d-tuple of positive integers indexing tensor-product eigenfunctions.
class MultiIndex {
public:
    MultiIndex() = default;

    explicit MultiIndex(std::vector<int> entries) : entries_(std::move(entries)) {
        if (entries_.empty()) throw DimensionError("MultiIndex needs at least one entry");
        for (int e : entries_)
            if (e < 1) throw DomainError("MultiIndex entries must be >= 1");
    }

    MultiIndex(std::initializer_list<int> entries) : MultiIndex(std::vector<int>(entries)) {}

    int dim() const noexcept { return static_cast<int>(entries_.size()); }
    int operator[](std::size_t j) const { return entries_[j]; }
    const std::vector<int>& entries() const noexcept { return entries_; }

    long long sum_sq() const noexcept {
        long long s = 0;
        for (int e : entries_) s += static_cast<long long>(e) * e;
        return s;
    }

    int max_norm() const noexcept { return *std::max_element(entries_.begin(), entries_.end()); }

    /// Entries joined by ';', e.g. "1;2".
    std::string to_string() const {
        std::string s;
        for (std::size_t j = 0; j < entries_.size(); ++j) {
            if (j) s += ';';
            s += std::to_string(entries_[j]);
        }
        return s;
    }

    auto operator<=>(const MultiIndex&) const = default;

private:
    std::vector<int> entries_;
};

/// All multi-indices of dimension d with every entry in 1..max_index, lexicographic.
inline std::vector<MultiIndex> enumerate_cube(int d, int max_index) {
    if (d < 1 || max_index < 1) throw DomainError("enumerate_cube needs d >= 1 and max_index >= 1");
    std::vector<MultiIndex> out;
    std::vector<int> cur(static_cast<std::size_t>(d), 1);
    while (true) {
        out.emplace_back(cur);
        int j = d - 1;
        while (j >= 0 && cur[static_cast<std::size_t>(j)] == max_index) {
            cur[static_cast<std::size_t>(j)] = 1;
            --j;
        }
        if (j < 0) break;
        ++cur[static_cast<std::size_t>(j)];
    }
    return out;
}

/// Smoothness scale G^s over d dimensions.
struct SmoothnessScale {
    int d = 1;
    double s = 0.0;
};

/// A truncated coefficient sequence in the canonical order of its basis.
struct CoeffSeq {
    std::string basis_id;
    int d = 1;
    std::vector<double> coeffs;

    std::size_t truncation() const noexcept { return coeffs.size(); }
};

/// G^s norm: sqrt(sum_l v_l^2 l^{2s/d}), summed left to right.
inline double gs_norm(const CoeffSeq& v, const SmoothnessScale& scale) {
    if (scale.d != v.d) throw DimensionError("gs_norm: scale dimension does not match sequence dimension");
    if (scale.d < 1) throw DimensionError("gs_norm: dimension must be >= 1");
    double acc = 0.0;
    const double expo = 2.0 * scale.s / scale.d;
    for (std::size_t l = 0; l < v.coeffs.size(); ++l) {
        const double c = v.coeffs[l];
        acc += c * c * (scale.s == 0.0 ? 1.0 : std::pow(static_cast<double>(l + 1), expo));
    }
    return std::sqrt(acc);
}

/// One entry of a sorted multi-indexed eigen array.
template <class Payload>
struct IndexedEigen {
    MultiIndex index;
    double eigenvalue = 0.0;
    Payload payload{};
};

/// Orders a multi-indexed eigen array by decreasing eigenvalue magnitude,
/// ties broken by lexicographic order of the index.
template <class Payload>
std::vector<IndexedEigen<Payload>> sort_multiindexed(const std::map<MultiIndex, std::pair<double, Payload>>& values) {
    std::vector<IndexedEigen<Payload>> out;
    out.reserve(values.size());
    for (const auto& [idx, ev] : values) {
        if (!(ev.first > 0.0)) throw DomainError("sort_multiindexed: eigenvalue must be positive at " + idx.to_string());
        out.push_back({idx, ev.first, ev.second});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::abs(a.eigenvalue) > std::abs(b.eigenvalue);
    });
    return out;
}

/// Writes `index,coeff` CSV and a `{basis_id, d, N}` JSON sidecar next to it.
inline void write_coeff_seq(const std::filesystem::path& csv_path, const CoeffSeq& v) {
    io::CsvWriter w({"index", "coeff"});
    for (std::size_t l = 0; l < v.coeffs.size(); ++l) w.row(l + 1, v.coeffs[l]);
    w.save(csv_path);
    nlohmann::ordered_json meta;
    meta["basis_id"] = v.basis_id;
    meta["d"] = v.d;
    meta["N"] = v.coeffs.size();
    auto json_path = csv_path;
    json_path.replace_extension(".json");
    io::write_atomic(json_path, meta.dump(2) + "\n");
}

inline CoeffSeq read_coeff_seq(const std::filesystem::path& csv_path) {
    auto json_path = csv_path;
    json_path.replace_extension(".json");
    CoeffSeq v;
    try {
        auto meta = nlohmann::json::parse(io::read_text(json_path));
        v.basis_id = meta.at("basis_id").get<std::string>();
        v.d = meta.at("d").get<int>();
        const auto n = meta.at("N").get<std::size_t>();
        auto table = io::read_csv(csv_path);
        const auto ci = table.column("index");
        const auto cc = table.column("coeff");
        if (table.rows.size() != n) throw DimensionError(csv_path.string() + ": row count does not match N");
        v.coeffs.resize(n);
        for (std::size_t r = 0; r < n; ++r) {
            if (table.rows[r][ci] != static_cast<double>(r + 1))
                throw ConfigError(csv_path.string() + ": indices must be 1..N in order");
            v.coeffs[r] = table.rows[r][cc];
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(json_path.string() + ": " + e.what());
    }
    return v;
}

}  // namespace pdelin
