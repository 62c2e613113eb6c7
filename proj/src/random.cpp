#include "cpomdp/random.hpp"

namespace cpomdp {

int sample_categorical(std::span<const double> probabilities, double u) {
    double cumulative = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (probabilities[i] <= 0.0) {
            continue;
        }
        cumulative += probabilities[i];
        last_positive = static_cast<int>(i);
        if (u < cumulative) {
            return last_positive;
        }
    }
    // Rounding can leave the total a hair below 1.
    return last_positive;
}

}  // namespace cpomdp
