#pragma once

#include <limits>
#include <string>
#include <vector>

#include "nce/core.hpp"
#include "nce/cross.hpp"

namespace nce {

/// Predicted best decrement for every cut-point pair (a1, a2) of a tour pair.
/// Pairs without an admissible end point hold -inf.
class DecrementMatrix {
public:
    DecrementMatrix() = default;
    DecrementMatrix(int rows, int cols)
        : rows_(rows), cols_(cols),
          v_(static_cast<std::size_t>(rows) * cols, -std::numeric_limits<double>::infinity()) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double &at(int a1, int a2) { return v_[static_cast<std::size_t>(a1) * cols_ + a2]; }
    double at(int a1, int a2) const { return v_[static_cast<std::size_t>(a1) * cols_ + a2]; }
    const std::vector<double> &values() const { return v_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> v_;
};

/// Maps a tour pair to a matrix of predicted best cost decrements.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual std::string name() const = 0;
    virtual DecrementMatrix predict_all(const Tour &t1, const Tour &t2, const Problem &problem,
                                        const SearchRange &range) const = 0;
};

/// Exact labels: every entry is the inner search result.
class ExactOracle final : public Predictor {
public:
    std::string name() const override { return "exact"; }
    DecrementMatrix predict_all(const Tour &t1, const Tour &t2, const Problem &problem,
                                const SearchRange &range) const override;
};

struct CutPair {
    int a1 = 0;
    int a2 = 0;
    double score = 0.0;
};

/// Admissible pairs sorted by descending score, ties by ascending (a1, a2).
std::vector<CutPair> ranked_pairs(const DecrementMatrix &m);

} // namespace nce
