// Simulate a three-variable chain, learn it back, and score the estimate.
#include <iostream>

#include "htcit/htcit.hpp"

int main() {
    using namespace htcit;
    BinaryMatrix adj(3);
    adj.set(0, 1);
    adj.set(1, 2);
    const Dag truth(adj);

    ScmConfig scm;
    scm.d = 3;
    scm.e = 2;
    scm.n = 1000;
    scm.seed = 7;
    const TwoSliceDataset data = simulate(scm, truth);

    const DiscoveryResult res = discover(data, KernelConfig{}, 0.01, OrderingOptions{}, PruneConfig{});

    std::cout << "layers (leaves first):\n";
    for (std::size_t k = 0; k < res.ordering.layers.layers.size(); ++k) {
        std::cout << "  " << k << ":";
        for (std::size_t v : res.ordering.layers.layers[k]) std::cout << ' ' << data.labels[v];
        std::cout << '\n';
    }
    std::cout << "edges:\n";
    for (auto [i, j] : res.dag().edges()) std::cout << "  " << data.labels[i] << " -> " << data.labels[j] << '\n';
    std::cout << "shd = " << shd(res.dag(), truth) << ", f1 = " << f1(res.dag(), truth) << '\n';
}
