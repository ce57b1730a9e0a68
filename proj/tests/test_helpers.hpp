#pragma once

#include <cmath>
#include <string>

#include "chembfn/network.hpp"

namespace chembfn::testing {

inline std::string data_path(const std::string& name) { return std::string(CHEMBFN_TEST_DATA) + "/" + name; }

// Two-layer, hidden-16, K=5 network with every tensor randomised so that
// gates and modulation are active.
inline NetworkConfig toy_config(int label_dim = 0) {
    NetworkConfig c;
    c.n_layers = 2;
    c.n_heads = 2;
    c.hidden_dim = 16;
    c.k_categories = 5;
    c.time_hidden = 8;
    c.label_hidden = 8;
    c.label_dim = label_dim;
    c.dropout = 0.0;
    return c;
}

inline Denoiser toy_network(std::uint64_t seed, int label_dim = 0, double scale = 0.3) {
    Denoiser net(toy_config(label_dim), seed);
    net.randomize(seed + 1, scale);
    return net;
}

}  // namespace chembfn::testing
