#include "nce/predictor.hpp"

#include <algorithm>
#include <cmath>

namespace nce {

DecrementMatrix ExactOracle::predict_all(const Tour &t1, const Tour &t2, const Problem &problem,
                                         const SearchRange &range) const {
    const CrossEvaluator ev(t1, t2, problem);
    DecrementMatrix m(t1.size() + 1, t2.size() + 1);
    for (int a1 = 0; a1 <= t1.size(); ++a1)
        for (int a2 = 0; a2 <= t2.size(); ++a2) m.at(a1, a2) = inner_search(ev, range, a1, a2).y;
    return m;
}

std::vector<CutPair> ranked_pairs(const DecrementMatrix &m) {
    std::vector<CutPair> out;
    out.reserve(m.values().size());
    for (int a1 = 0; a1 < m.rows(); ++a1)
        for (int a2 = 0; a2 < m.cols(); ++a2) {
            const double s = m.at(a1, a2);
            if (std::isinf(s) && s < 0) continue;
            out.push_back({a1, a2, s});
        }
    std::stable_sort(out.begin(), out.end(), [](const CutPair &x, const CutPair &y) { return x.score > y.score; });
    return out;
}

} // namespace nce
