#include "gil/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "gil/errors.hpp"
#include "gil/optim.hpp"
#include "gil/rng.hpp"
#include "gil/tape.hpp"

namespace gil {

ClassifierResult train_softmax_classifier(const Tensor& features, const std::vector<int>& labels,
                                          int n_classes, const SoftmaxClassifierConfig& config) {
    if (features.rows != static_cast<std::int64_t>(labels.size()))
        throw UsageError("classifier: one label per feature row required");
    if (n_classes < 2) throw ConfigError("classifier: needs at least two classes");
    if (features.rows < 2) throw ConfigError("classifier: needs at least two samples");

    std::vector<std::size_t> order(static_cast<std::size_t>(features.rows));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    stream_rng(config.seed, config.site + ".split").shuffle(order);
    auto held = static_cast<std::size_t>(
        std::llround(config.heldout_fraction * static_cast<double>(order.size())));
    held = std::min(held, order.size() - 1);
    std::vector<std::size_t> test_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
    std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());

    bool single_class = true;
    for (std::size_t i = 1; i < train_rows.size(); ++i) {
        if (labels[train_rows[i]] != labels[train_rows[0]]) {
            single_class = false;
            break;
        }
    }
    if (single_class) throw ConfigError("classifier: training split holds a single class");

    Tensor weights(features.cols, n_classes, true);
    Tensor bias(1, n_classes, true);

    std::vector<Tensor*> params{&weights, &bias};
    std::vector<const Tensor*> param_view{&weights, &bias};
    AdamState state = make_adam_state(param_view, config.lr);

    ClassifierResult result;
    auto gather_batch = [&](const std::vector<std::size_t>& rows, std::size_t begin,
                            std::size_t end, std::vector<int>& batch_labels) {
        Tensor batch(static_cast<std::int64_t>(end - begin), features.cols);
        batch_labels.clear();
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t src = rows[i];
            std::copy(features.values.begin() + static_cast<std::ptrdiff_t>(src) * features.cols,
                      features.values.begin() + (static_cast<std::ptrdiff_t>(src) + 1) * features.cols,
                      batch.values.begin() + static_cast<std::ptrdiff_t>(i - begin) * features.cols);
            batch_labels.push_back(labels[src]);
        }
        return batch;
    };

    std::vector<int> batch_labels;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        stream_rng(config.seed, config.site + ".shuffle", {static_cast<std::uint64_t>(epoch)})
            .shuffle(train_rows);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < train_rows.size();
             begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(train_rows.size(), begin + static_cast<std::size_t>(config.batch_size));
            GradTape tape;
            auto f = tape.leaf(gather_batch(train_rows, begin, end, batch_labels));
            auto w = tape.leaf(weights);
            auto b = tape.leaf(bias);
            auto loss = tape.cross_entropy_mean(tape.affine(f, w, b), batch_labels);
            tape.backward(loss);
            std::vector<const Tensor*> grads{&tape.grad(w), &tape.grad(b)};
            adam_step(params, grads, state, config.lr);
            epoch_loss += tape.value(loss).values[0];
            ++batches;
        }
        result.epoch_losses.push_back(batches > 0 ? epoch_loss / static_cast<double>(batches) : 0.0);
    }

    const auto& eval_rows = test_rows.empty() ? train_rows : test_rows;
    std::size_t correct = 0;
    for (std::size_t src : eval_rows) {
        int best = 0;
        double best_score = 0.0;
        for (int c = 0; c < n_classes; ++c) {
            double score = bias.at(0, c);
            for (std::int64_t j = 0; j < features.cols; ++j)
                score += features.at(static_cast<std::int64_t>(src), j) * weights.at(j, c);
            if (c == 0 || score > best_score) {
                best_score = score;
                best = c;
            }
        }
        if (best == labels[src]) ++correct;
    }
    result.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(eval_rows.size());
    return result;
}

}  // namespace gil
