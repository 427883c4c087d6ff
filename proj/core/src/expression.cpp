#include "gil/expression.hpp"

#include <cmath>

#include "gil/errors.hpp"

namespace gil {

GeneVocabulary GeneVocabulary::from_symbols(std::vector<std::string> symbols) {
    GeneVocabulary v;
    v.symbols = std::move(symbols);
    v.index.reserve(v.symbols.size());
    for (std::size_t i = 0; i < v.symbols.size(); ++i) {
        auto [it, inserted] = v.index.emplace(v.symbols[i], static_cast<std::int64_t>(i));
        (void)it;
        if (!inserted) throw DataError("vocabulary: duplicate symbol " + v.symbols[i]);
    }
    return v;
}

void ExpressionSample::validate(std::int64_t vocab_size) const {
    const std::string who = "sample " + std::to_string(id);
    if (gene_indices.size() != values.size())
        throw DataError(who + ": genes and values differ in length");
    for (std::size_t i = 0; i < gene_indices.size(); ++i) {
        if (gene_indices[i] < 0 || gene_indices[i] >= vocab_size)
            throw DataError(who + ": gene index " + std::to_string(gene_indices[i]) +
                            " outside vocabulary");
        if (i > 0 && gene_indices[i] <= gene_indices[i - 1])
            throw DataError(who + ": gene indices not strictly increasing");
        if (!(values[i] >= 0.0) || !std::isfinite(values[i]))
            throw DataError(who + ": expression values must be finite and non-negative");
    }
}

void LabeledDataset::validate(std::int64_t vocab_size) const {
    if (n_classes < 2) throw DataError("dataset " + name + ": needs at least two classes");
    std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
    for (const auto& s : samples) {
        s.validate(vocab_size);
        if (!s.label.has_value())
            throw DataError("dataset " + name + ": sample " + std::to_string(s.id) + " unlabeled");
        const int y = *s.label;
        if (y < 0 || y >= n_classes)
            throw DataError("dataset " + name + ": label " + std::to_string(y) + " out of range");
        seen[static_cast<std::size_t>(y)] = true;
    }
    for (int c = 0; c < n_classes; ++c) {
        if (!seen[static_cast<std::size_t>(c)])
            throw DataError("dataset " + name + ": class " + std::to_string(c) + " unrepresented");
    }
}

}  // namespace gil
