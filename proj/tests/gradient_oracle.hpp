#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "chembfn/bfn.hpp"

namespace chembfn::testing {

struct GradReport {
    double worst_tensor_rel = 0.0;  // ||fd - an|| / ||fd|| over a tensor
    double worst_entry_rel = 0.0;   // entrywise, gradients above the floor only
    std::string worst_name;
};

// Central differences for every entry of every tensor in `store`, compared
// against `analytic` (aligned with the store).
inline GradReport compare_gradients(ParamStore& store, const std::vector<Matrix>& analytic,
                             const std::function<double()>& loss, double h = 1e-5) {
    GradReport rep;
    for (std::size_t i = 0; i < store.size(); ++i) {
        Matrix& p = store.value(i);
        double diff_sq = 0.0, ref_sq = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double saved = p.data()[j];
            p.data()[j] = saved + h;
            const double up = loss();
            p.data()[j] = saved - h;
            const double down = loss();
            p.data()[j] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = analytic[i].data()[j];
            diff_sq += (fd - an) * (fd - an);
            ref_sq += fd * fd;
            const double scale = std::max(std::abs(fd), std::abs(an));
            if (scale > 1e-5) {
                const double rel = std::abs(fd - an) / scale;
                if (rel > rep.worst_entry_rel) rep.worst_entry_rel = rel;
            }
        }
        if (ref_sq > 0.0) {
            const double rel = std::sqrt(diff_sq / ref_sq);
            if (rel > rep.worst_tensor_rel) {
                rep.worst_tensor_rel = rel;
                rep.worst_name = store.name(i);
            }
        }
    }
    return rep;
}

inline PaddedBatch toy_batch() {
    // Ids are used as raw K=5 categories; no vocabulary semantics needed.
    PaddedBatch b;
    b.batch = 2;
    b.length = 4;
    b.ids = {1, 3, 4, 2, 1, 0, 2, 0};
    b.pad_mask = std::vector<bool>(8, true);
    return b;
}

}  // namespace chembfn::testing
