// Regenerates data/toy_chain: X1 -> X2 -> X3, observational slices (1, 2), n = 500.
#include <iostream>

#include "htcit/htcit.hpp"

int main(int argc, char** argv) {
    using namespace htcit;
    const std::string out = argc > 1 ? argv[1] : "data/toy_chain";
    BinaryMatrix adj(3);
    adj.set(0, 1);
    adj.set(1, 2);
    const Dag truth(adj);
    ScmConfig scm;
    scm.d = 3;
    scm.e = 2;
    scm.n = 500;
    scm.seed = 2024;
    TwoSliceDataset data = simulate(scm, truth);
    save_dataset(out, data, scm);
    std::cout << "wrote " << out << "/" << kSidecarName << '\n';
}
