#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace gil {

/// Ordered gene symbol list; index = position, so symbols and [0, V)
/// are in bijection.
struct GeneVocabulary {
    std::vector<std::string> symbols;
    std::unordered_map<std::string, std::int64_t> index;

    static GeneVocabulary from_symbols(std::vector<std::string> symbols);
    std::int64_t size() const { return static_cast<std::int64_t>(symbols.size()); }
};

/// One cell profile: strictly increasing gene indices paired with
/// non-negative finite expression values, plus an optional class label.
struct ExpressionSample {
    std::int64_t id = -1;
    std::vector<std::int64_t> gene_indices;
    std::vector<double> values;
    std::optional<int> label;

    std::size_t size() const { return gene_indices.size(); }

    /// Raises DataError on any invariant violation.
    void validate(std::int64_t vocab_size) const;
};

/// A downstream classification dataset.
struct LabeledDataset {
    std::string name;
    int n_classes = 0;
    std::vector<ExpressionSample> samples;

    /// Raises DataError unless labels are in [0, n_classes) and every
    /// class is represented.
    void validate(std::int64_t vocab_size) const;
};

}  // namespace gil
