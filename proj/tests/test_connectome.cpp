#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <vector>

#include "hagnn/connectome.hpp"
#include "hagnn/csv.hpp"
#include "test_util.hpp"

using hagnn::BoldMatrix;
using hagnn::BrainGraph;
using hagnn::ChannelKind;
using hagnn::EdgeRule;
using hagnn::FCMatrix;
using hagnn::ParcelLabels;
using hagnn::Tensor;

namespace {

// Textbook Pearson correlation, written independently of the library code:
// explicit means, explicit population standard deviations.
double pearson_reference(const std::vector<double>& x,
                         const std::vector<double>& y) {
  std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  cov /= n;
  vx /= n;
  vy /= n;
  return cov / (std::sqrt(vx) * std::sqrt(vy));
}

std::vector<double> column(const Tensor& m, std::size_t j) {
  std::vector<double> c(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) c[i] = m.at(i, j);
  return c;
}

}  // namespace

TEST_CASE("roi extraction averages the voxels of each parcel") {
  // Voxels 0,1 belong to ROI 0; voxels 2,3 to ROI 1.
  Tensor voxels = Tensor::matrix({{1, 3, 10, 20},
                                  {4, 6, 20, 40},
                                  {7, 9, 30, 50}});
  BoldMatrix bold(voxels, ChannelKind::kVoxel);
  ParcelLabels parcels({0, 0, 1, 1}, 2);
  BoldMatrix roi = extract_roi_timeseries(bold, parcels);
  REQUIRE(roi.channels() == 2);
  REQUIRE(roi.timepoints() == 3);
  CHECK(roi.values.at(0, 0) == 2.0);
  CHECK(roi.values.at(1, 0) == 5.0);
  CHECK(roi.values.at(2, 0) == 8.0);
  CHECK(roi.values.at(0, 1) == 15.0);
  CHECK(roi.values.at(1, 1) == 30.0);
  CHECK(roi.values.at(2, 1) == 40.0);
}

TEST_CASE("one voxel per roi passes the signal through") {
  hagnn::RngStream rng(61);
  Tensor voxels = hagnn_test::random_tensor(rng, 5, 3);
  BoldMatrix bold(voxels, ChannelKind::kVoxel);
  // Permuted assignment: voxel 0 -> ROI 2, voxel 1 -> ROI 0, voxel 2 -> ROI 1.
  ParcelLabels parcels({2, 0, 1}, 3);
  BoldMatrix roi = extract_roi_timeseries(bold, parcels);
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(roi.values.at(t, 2) == voxels.at(t, 0));
    CHECK(roi.values.at(t, 0) == voxels.at(t, 1));
    CHECK(roi.values.at(t, 1) == voxels.at(t, 2));
  }
}

TEST_CASE("constant voxel columns average to the same constants") {
  Tensor voxels = Tensor::matrix({{3, 3, 8, 8},
                                  {3, 3, 8, 8},
                                  {3, 3, 8, 8}});
  BoldMatrix bold(voxels, ChannelKind::kVoxel);
  BoldMatrix roi = extract_roi_timeseries(bold, ParcelLabels({0, 0, 1, 1}, 2));
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(roi.values.at(t, 0) == 3.0);
    CHECK(roi.values.at(t, 1) == 8.0);
  }
}

TEST_CASE("parcel and shape violations raise typed errors") {
  Tensor voxels(3, 4, 1.0);
  BoldMatrix bold(voxels, ChannelKind::kVoxel);
  CHECK_THROWS_WITH(ParcelLabels({0, 0, 0, 0}, 2),
                    Catch::Matchers::ContainsSubstring("ROI 1"));
  CHECK_THROWS_AS(ParcelLabels({0, 0, 1, 5}, 2), hagnn::LabelError);
  CHECK_THROWS_AS(extract_roi_timeseries(bold, ParcelLabels({0, 1}, 2)),
                  hagnn::DimensionError);
  CHECK_THROWS_AS(BoldMatrix(Tensor(2, 4, 1.0), ChannelKind::kVoxel),
                  hagnn::PreconditionError);
  CHECK_THROWS_AS(BoldMatrix(Tensor(5, 1, 1.0), ChannelKind::kVoxel),
                  hagnn::PreconditionError);
}

TEST_CASE("pearson matches hand-computed pairs") {
  // Columns: x = [1,2,3], y = [1,3,2]; r(x, y) = 0.5.
  BoldMatrix ts(Tensor::matrix({{1, 1}, {2, 3}, {3, 2}}), ChannelKind::kRoi);
  FCMatrix fc = pearson_fc(ts);
  CHECK(fc.values.at(0, 0) == 1.0);
  CHECK(fc.values.at(1, 1) == 1.0);
  CHECK(fc.values.at(0, 1) == Catch::Approx(0.5).margin(1e-15));
  CHECK(fc.values.at(0, 1) == fc.values.at(1, 0));

  // Perfect anti-correlation.
  BoldMatrix anti(Tensor::matrix({{1, -1}, {2, -2}, {3, -3}}),
                  ChannelKind::kRoi);
  FCMatrix fca = pearson_fc(anti);
  CHECK(fca.values.at(0, 1) == Catch::Approx(-1.0).margin(1e-15));

  // Self-correlation via two identical columns.
  BoldMatrix same(Tensor::matrix({{1, 1}, {2, 2}, {3, 3}}), ChannelKind::kRoi);
  CHECK(pearson_fc(same).values.at(0, 1) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("pearson agrees with the brute-force oracle within 1e-12") {
  hagnn::RngStream rng(303);
  Tensor data = hagnn_test::random_tensor(rng, 10, 8);
  FCMatrix fc = pearson_fc(BoldMatrix(data, ChannelKind::kRoi));
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      double expect = pearson_reference(column(data, i), column(data, j));
      CHECK(std::abs(fc.values.at(i, j) - expect) < 1e-12);
    }
}

TEST_CASE("pearson is invariant to positive affine rescaling per column") {
  hagnn::RngStream rng(404);
  Tensor data = hagnn_test::random_tensor(rng, 12, 6);
  Tensor scaled = data;
  for (std::size_t j = 0; j < 6; ++j) {
    double a = rng.uniform(0.5, 4.0);
    double b = rng.normal(0.0, 10.0);
    for (std::size_t t = 0; t < 12; ++t)
      scaled.at(t, j) = a * data.at(t, j) + b;
  }
  FCMatrix fc1 = pearson_fc(BoldMatrix(data, ChannelKind::kRoi));
  FCMatrix fc2 = pearson_fc(BoldMatrix(scaled, ChannelKind::kRoi));
  for (std::size_t k = 0; k < fc1.values.size(); ++k)
    CHECK(std::abs(fc1.values[k] - fc2.values[k]) < 1e-9);
}

TEST_CASE("zero-variance rois are flagged and zeroed out") {
  Tensor data = Tensor::matrix({{1, 5, 2}, {2, 5, 1}, {3, 5, 4}});
  FCMatrix fc = pearson_fc(BoldMatrix(data, ChannelKind::kRoi));
  REQUIRE(fc.degenerate.size() == 3);
  CHECK(fc.degenerate[1] == 1);
  CHECK(fc.degenerate[0] == 0);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(fc.values.at(1, j) == 0.0);
    CHECK(fc.values.at(j, 1) == 0.0);
  }
  CHECK(fc.values.at(0, 0) == 1.0);
  CHECK(fc.values.at(2, 2) == 1.0);
}

TEST_CASE("fc entries stay inside [-1, 1] and the matrix is exactly symmetric") {
  hagnn::RngStream rng(77);
  Tensor data = hagnn_test::random_tensor(rng, 20, 9);
  FCMatrix fc = pearson_fc(BoldMatrix(data, ChannelKind::kRoi));
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j) {
      CHECK(fc.values.at(i, j) >= -1.0);
      CHECK(fc.values.at(i, j) <= 1.0);
      CHECK(fc.values.at(i, j) == fc.values.at(j, i));
    }
}

TEST_CASE("threshold rule keeps exactly the pairs above tau") {
  Tensor vals = Tensor::matrix({{1.0, 0.9, 0.2},
                                {0.9, 1.0, -0.6},
                                {0.2, -0.6, 1.0}});
  BrainGraph g = build_graph(hagnn::fc_from_values(vals),
                             EdgeRule::threshold(0.5));
  REQUIRE(g.edges.size() == 2);
  CHECK(g.edges[0] == std::make_pair<std::size_t, std::size_t>(0, 1));
  CHECK(g.edges[1] == std::make_pair<std::size_t, std::size_t>(1, 2));
  CHECK(g.edge_weights[0] == 0.9);
  CHECK(g.edge_weights[1] == 0.6);
}

TEST_CASE("threshold on an identity fc yields no edges") {
  BrainGraph g = build_graph(hagnn::fc_from_values(Tensor::identity(4)),
                             EdgeRule::threshold(0.5));
  CHECK(g.edges.empty());
  CHECK(g.num_nodes() == 4);
}

TEST_CASE("topk with k = R-1 builds the complete graph on live rois") {
  hagnn::RngStream rng(88);
  Tensor data = hagnn_test::random_tensor(rng, 15, 6);
  // Flatten one column so ROI 3 is degenerate.
  for (std::size_t t = 0; t < 15; ++t) data.at(t, 3) = 2.5;
  FCMatrix fc = pearson_fc(BoldMatrix(data, ChannelKind::kRoi));
  BrainGraph g = build_graph(fc, EdgeRule::topk(5));
  // 5 live nodes -> complete graph has C(5,2) = 10 edges, none touching 3.
  CHECK(g.edges.size() == 10);
  for (auto [i, j] : g.edges) {
    CHECK(i != 3);
    CHECK(j != 3);
  }
}

TEST_CASE("topk ties break toward the smaller neighbor index") {
  // Node 0 sees |r| = 0.5 at both neighbors 1 and 2; nodes 1 and 2 prefer
  // each other (0.9), and node 3 ties at 0 across the board. With k = 1 the
  // only way (0, 1) appears without (0, 2) is node 0 resolving its tie to
  // the smaller index, and (0, 3) likewise comes from node 3's tie-break.
  Tensor vals = Tensor::matrix({{1.0, 0.5, 0.5, 0.0},
                                {0.5, 1.0, 0.9, 0.0},
                                {0.5, 0.9, 1.0, 0.0},
                                {0.0, 0.0, 0.0, 1.0}});
  BrainGraph g = build_graph(hagnn::fc_from_values(vals), EdgeRule::topk(1));
  std::set<std::pair<std::size_t, std::size_t>> edges(g.edges.begin(),
                                                      g.edges.end());
  CHECK(edges.count({0, 1}) == 1);
  CHECK(edges.count({0, 2}) == 0);
  CHECK(edges.count({1, 2}) == 1);
  CHECK(edges.count({0, 3}) == 1);
  CHECK(edges.size() == 3);
}

TEST_CASE("edge weights use the absolute correlation") {
  Tensor vals = Tensor::matrix({{1.0, -0.8}, {-0.8, 1.0}});
  BrainGraph g = build_graph(hagnn::fc_from_values(vals), EdgeRule::topk(1));
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edge_weights[0] == 0.8);
}

TEST_CASE("graph structure follows a node relabeling of the fc matrix") {
  hagnn::RngStream rng(99);
  Tensor data = hagnn_test::random_tensor(rng, 18, 7);
  FCMatrix fc = pearson_fc(BoldMatrix(data, ChannelKind::kRoi));
  // Permute rows and columns simultaneously.
  std::vector<std::size_t> perm = {3, 0, 6, 2, 5, 1, 4};
  Tensor pvals(7, 7);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j)
      pvals.at(i, j) = fc.values.at(perm[i], perm[j]);
  FCMatrix pfc = hagnn::fc_from_values(pvals);

  for (const EdgeRule& rule :
       {EdgeRule::topk(2), EdgeRule::threshold(0.15)}) {
    BrainGraph g1 = build_graph(fc, rule);
    BrainGraph g2 = build_graph(pfc, rule);
    REQUIRE(g1.edges.size() == g2.edges.size());
    std::set<std::pair<std::size_t, std::size_t>> expect;
    for (auto [i, j] : g2.edges) {
      std::size_t a = perm[i];
      std::size_t b = perm[j];
      expect.insert({std::min(a, b), std::max(a, b)});
    }
    std::set<std::pair<std::size_t, std::size_t>> got(g1.edges.begin(),
                                                      g1.edges.end());
    CHECK(got == expect);
  }
}

TEST_CASE("bad edge rule parameters raise config errors") {
  FCMatrix fc = hagnn::fc_from_values(Tensor::identity(5));
  CHECK_THROWS_AS(build_graph(fc, EdgeRule::threshold(1.0)),
                  hagnn::ConfigError);
  CHECK_THROWS_AS(build_graph(fc, EdgeRule::threshold(-0.1)),
                  hagnn::ConfigError);
  CHECK_THROWS_AS(build_graph(fc, EdgeRule::topk(0)), hagnn::ConfigError);
  CHECK_THROWS_AS(build_graph(fc, EdgeRule::topk(5)), hagnn::ConfigError);
  CHECK_THROWS_AS(EdgeRule::parse("nearest:3"), hagnn::ConfigError);
  CHECK_THROWS_AS(EdgeRule::parse("topk"), hagnn::ConfigError);
  CHECK_THROWS_AS(EdgeRule::parse("topk:x"), hagnn::ConfigError);
  CHECK(EdgeRule::parse("topk:10").k == 10);
  CHECK(EdgeRule::parse("threshold:0.4").tau == 0.4);
}

TEST_CASE("pipeline is deterministic end to end") {
  hagnn::RngStream rng(111);
  Tensor voxels = hagnn_test::random_tensor(rng, 30, 12);
  std::vector<std::size_t> labels = {0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3};
  auto run = [&]() {
    BoldMatrix roi = extract_roi_timeseries(
        BoldMatrix(voxels, ChannelKind::kVoxel), ParcelLabels(labels, 4));
    return pearson_fc(roi);
  };
  FCMatrix a = run();
  FCMatrix b = run();
  for (std::size_t k = 0; k < a.values.size(); ++k)
    CHECK(a.values[k] == b.values[k]);
}

TEST_CASE("fc csv round trip is bit-identical") {
  hagnn::RngStream rng(121);
  Tensor data = hagnn_test::random_tensor(rng, 10, 5);
  for (std::size_t t = 0; t < 10; ++t) data.at(t, 2) = 1.0;  // degenerate ROI
  FCMatrix fc = pearson_fc(BoldMatrix(data, ChannelKind::kRoi));
  std::string path = "fc_roundtrip_test.csv";
  hagnn::write_matrix_csv(path, fc.values);
  FCMatrix back = hagnn::fc_from_values(hagnn::read_matrix_csv(path, false));
  std::remove(path.c_str());
  REQUIRE(back.values.same_shape(fc.values));
  for (std::size_t k = 0; k < fc.values.size(); ++k)
    CHECK(back.values[k] == fc.values[k]);
  CHECK(back.degenerate == fc.degenerate);
}

TEST_CASE("csv reader reports malformed input with location") {
  std::string path = "bad_csv_test.csv";
  {
    std::ofstream out(path);
    out << "1,2\n1,oops\n";
  }
  CHECK_THROWS_WITH(hagnn::read_matrix_csv(path, false),
                    Catch::Matchers::ContainsSubstring(":2"));
  {
    std::ofstream out(path);
    out << "1,2\n1\n";
  }
  CHECK_THROWS_AS(hagnn::read_matrix_csv(path, false), hagnn::IoError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(hagnn::read_matrix_csv("does_not_exist_test.csv", false),
                  hagnn::IoError);
}
