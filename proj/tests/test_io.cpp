#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "htcit/io.hpp"
#include "test_util.hpp"

using namespace htcit;

namespace {

void write_file(const fs::path& p, const std::string& body) {
    std::ofstream out(p);
    out << body;
}

}  // namespace

TEST(Csv, LoadsTwoSlices) {
    const TempDir tmp;
    write_file(tmp / "a.csv", "a,b,c\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n13,14,15\n");
    write_file(tmp / "b.csv", "a,b,c\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n13,14,15\n");
    const auto ds = load_two_slice_csv(tmp / "a.csv", tmp / "b.csv");
    EXPECT_EQ(ds.n(), 5u);
    EXPECT_EQ(ds.d(), 3u);
    EXPECT_EQ(ds.intervened, std::vector<bool>(3, false));
    EXPECT_FALSE(ds.truth.has_value());
    EXPECT_DOUBLE_EQ(ds.x_t(4, 2), 15.0);
}

TEST(Csv, AlignsReorderedColumns) {
    const TempDir tmp;
    write_file(tmp / "a.csv", "a,b,c\n1,2,3\n4,5,6\n");
    write_file(tmp / "b.csv", "a,b,c\n10,20,30\n40,50,60\n");
    write_file(tmp / "b2.csv", "c,a,b\n30,10,20\n60,40,50\n");
    const auto ref = load_two_slice_csv(tmp / "a.csv", tmp / "b.csv");
    const auto shuffled = load_two_slice_csv(tmp / "a.csv", tmp / "b2.csv");
    EXPECT_EQ(ref.x_t, shuffled.x_t);
    EXPECT_EQ(ref.labels, shuffled.labels);
}

TEST(Csv, NaCellNamesTheLocation) {
    const TempDir tmp;
    write_file(tmp / "a.csv", "a,b\n1,2\n3,NA\n");
    write_file(tmp / "b.csv", "a,b\n1,2\n3,4\n");
    try {
        load_two_slice_csv(tmp / "a.csv", tmp / "b.csv");
        FAIL() << "expected a parse error";
    } catch (const ParseError& ex) {
        const std::string msg = ex.what();
        EXPECT_NE(msg.find("a.csv:3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("'NA'"), std::string::npos) << msg;
    }
}

TEST(Csv, ShapeAndHeaderErrors) {
    const TempDir tmp;
    write_file(tmp / "a.csv", "a,b\n1,2\n3,4\n");
    write_file(tmp / "rows.csv", "a,b\n1,2\n");
    write_file(tmp / "cols.csv", "a,b,c\n1,2,3\n3,4,5\n");
    write_file(tmp / "names.csv", "a,z\n1,2\n3,4\n");
    write_file(tmp / "ragged.csv", "a,b\n1,2\n3\n");
    write_file(tmp / "empty.csv", "");
    EXPECT_THROW(load_two_slice_csv(tmp / "a.csv", tmp / "rows.csv"), ParseError);
    EXPECT_THROW(load_two_slice_csv(tmp / "a.csv", tmp / "cols.csv"), ParseError);
    EXPECT_THROW(load_two_slice_csv(tmp / "a.csv", tmp / "names.csv"), ParseError);
    EXPECT_THROW(load_two_slice_csv(tmp / "a.csv", tmp / "ragged.csv"), ParseError);
    EXPECT_THROW(load_two_slice_csv(tmp / "a.csv", tmp / "empty.csv"), ParseError);
    try {
        load_two_slice_csv(tmp / "a.csv", tmp / "missing.csv");
        FAIL();
    } catch (const std::runtime_error& ex) {
        EXPECT_NE(std::string(ex.what()).find("missing.csv"), std::string::npos);
    }
}

TEST(Csv, RoundTripIsExact) {
    const TempDir tmp;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    Eigen::MatrixXd m(7, 3);
    for (Eigen::Index r = 0; r < 7; ++r)
        for (Eigen::Index c = 0; c < 3; ++c) m(r, c) = g(rng) * 1e-3 + (c == 2 ? 1e12 : 0.0);
    write_csv(tmp / "m.csv", {"x", "y", "z"}, m);
    const CsvTable t = read_csv(tmp / "m.csv");
    EXPECT_EQ(t.values, m);
}

TEST(Dataset, SidecarRoundTrip) {
    const TempDir tmp;
    ScmConfig cfg;
    cfg.d = 5;
    cfg.e = 4;
    cfg.n = 40;
    cfg.intervention_fraction = 0.4;
    const Dag truth = sample_dag(5, 4, 3);
    const auto ds = simulate(cfg, truth);
    save_dataset(tmp.path(), ds, cfg);
    const auto back = load_dataset(tmp / kSidecarName);
    EXPECT_EQ(back.x_tau, ds.x_tau);
    EXPECT_EQ(back.x_t, ds.x_t);
    EXPECT_EQ(back.intervened, ds.intervened);
    EXPECT_EQ(back.labels, ds.labels);
    ASSERT_TRUE(back.truth.has_value());
    EXPECT_EQ(*back.truth, truth);
    const json side = read_json(tmp / kSidecarName);
    EXPECT_EQ(side.at("format"), "htcit-dataset/1");
    EXPECT_EQ(side.at("config").at("d"), 5);
}

TEST(Dataset, InvalidSidecarIsReported) {
    const TempDir tmp;
    write_file(tmp / "bad.json", "{not json");
    EXPECT_THROW(load_dataset(tmp / "bad.json"), ParseError);
    write_file(tmp / "partial.json", R"({"format": "htcit-dataset/1"})");
    EXPECT_THROW(load_dataset(tmp / "partial.json"), ParseError);
}

TEST(GraphArtifacts, DagJsonAndEdgeList) {
    const TempDir tmp;
    BinaryMatrix adj(3);
    adj.set(0, 2);
    adj.set(1, 2);
    const Dag g(adj, {"u", "v", "w"});
    write_json(tmp / "g.json", to_json(g));
    EXPECT_EQ(dag_from_json(read_json(tmp / "g.json")), g);
    write_edge_csv(tmp / "g.csv", g);
    std::ifstream in(tmp / "g.csv");
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_EQ(body, "src,dst\nu,w\nv,w\n");
}

TEST(GraphArtifacts, OrderingSerializesAsNestedArrays) {
    LayeredOrdering lo{{{2}, {1}, {0}}, {2, 1, 0}};
    const json j = to_json(lo);
    EXPECT_EQ(j.at("layers"), json::parse("[[2],[1],[0]]"));
    PValueMatrix pm{Eigen::MatrixXd::Ones(2, 2), 0.01};
    pm.p(0, 1) = 0.0;
    const json og = to_json(threshold(pm));
    EXPECT_EQ(og.at("adjacency"), json::parse("[[0,1],[0,0]]"));
    EXPECT_DOUBLE_EQ(og.at("alpha").get<double>(), 0.01);
}
