#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gil/tensor.hpp"

namespace gil {

/// Multinomial logistic regression on fixed features: a single linear map
/// [d x C] plus bias trained by cross-entropy with Adam. Deterministic
/// under (seed, site); weights start at zero (the problem is convex).
struct SoftmaxClassifierConfig {
    int epochs = 20;
    double lr = 0.01;
    std::int64_t batch_size = 64;
    double heldout_fraction = 0.2;
    std::uint64_t seed = 1;
    std::string site = "probe";
};

struct ClassifierResult {
    double heldout_accuracy = 0.0;
    std::vector<double> epoch_losses;  // mean training CE per epoch
};

ClassifierResult train_softmax_classifier(const Tensor& features, const std::vector<int>& labels,
                                          int n_classes, const SoftmaxClassifierConfig& config);

}  // namespace gil
