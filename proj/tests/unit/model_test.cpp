#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "ecnu/data.hpp"
#include "ecnu/error.hpp"
#include "ecnu/model.hpp"
#include "gradcheck.hpp"
#include "naive_model.hpp"

namespace ecnu {
namespace {

ModelConfig toy_config() {
  ModelConfig c;
  c.window = 4;
  c.top_k = 2;
  c.embed_dim = 3;
  c.feature_dim = 6;
  c.ecnum_layers = 2;
  c.ncrm_layers = 2;
  return c;
}

std::vector<double> random_values(std::size_t count, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(count);
  for (double& x : v) x = normal(rng);
  return v;
}

void fill(const Tensor& t, double value) {
  for (double& x : t.mutable_data()) x = value;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
           return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
         });
}

Tensor predict_tensor(const ModelParams& p, const Tensor& x) {
  Tape tape(false);
  return forward(tape, p, x, extract_graph(p.embeddings, p.config.top_k));
}

TEST(Config, Profiles) {
  const ModelConfig swat = ModelConfig::profile("swat");
  EXPECT_EQ(swat.window, 5u);
  EXPECT_EQ(swat.top_k, 30u);
  EXPECT_EQ(swat.embed_dim, 128u);
  EXPECT_EQ(swat.feature_dim, 256u);
  EXPECT_EQ(swat.ecnum_layers, 4u);
  EXPECT_EQ(swat.ncrm_layers, 4u);
  const ModelConfig synth = ModelConfig::profile("synth");
  EXPECT_EQ(synth, (ModelConfig{5, 5, 16, 32, 2, 2}));
  EXPECT_THROW(ModelConfig::profile("nope"), ContractError);
}

TEST(Config, Validation) {
  ModelConfig c = toy_config();
  EXPECT_NO_THROW(c.validate(4));
  EXPECT_THROW(c.validate(2), ContractError);
  c.feature_dim = 0;
  EXPECT_THROW(c.validate(4), ContractError);
}

TEST(Params, ShapesFollowConfig) {
  const ModelConfig c = toy_config();
  const ModelParams p = ModelParams::init(c, 5, 1);
  const auto shapes = parameter_shapes(c, 5);
  const auto named = p.named_parameters();
  ASSERT_EQ(shapes.size(), named.size());
  for (std::size_t k = 0; k < named.size(); ++k) {
    EXPECT_EQ(named[k].first, shapes[k].first);
    EXPECT_EQ(named[k].second.shape(), shapes[k].second);
  }
}

TEST(Params, CountMatchesClosedForm) {
  for (const char* name : {"swat", "wadi", "psm", "synth"}) {
    const ModelConfig c = ModelConfig::profile(name);
    const std::size_t n = c.top_k + 2;
    const std::size_t w = c.window, df = c.feature_dim, de = c.embed_dim;
    const std::size_t closed = (w * df + df) + ((df + 2 * de) * df + df) +
                               (c.ecnum_layers - 1) * (df * df + df) + ((df + de) * df + df) +
                               (c.ncrm_layers - 1) * (df * df + df) + (df + 1) + n * de;
    EXPECT_EQ(expected_parameter_count(c, n), closed) << name;
    if (std::string_view(name) == "synth") {
      EXPECT_EQ(ModelParams::init(c, n, 0).parameter_count(), closed);
    }
  }
}

TEST(Params, CloneIsIndependent) {
  ModelParams p = ModelParams::init(toy_config(), 4, 2);
  ModelParams q = p.clone();
  fill(q.encoder.weight, 0.0);
  EXPECT_NE(p.encoder.weight.data()[0], 0.0);
}

TEST(Encode, ZeroAndIdentity) {
  ModelConfig c = toy_config();
  ModelParams p = ModelParams::init(c, 4, 3);
  const Tensor x = Tensor::from({4, 4}, random_values(16, 9));
  fill(p.encoder.weight, 0.0);
  fill(p.encoder.bias, 0.0);
  Tape tape(false);
  const Tensor zero = encode(tape, p, x);
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);

  c.feature_dim = c.window;
  ModelParams q = ModelParams::init(c, 4, 3);
  fill(q.encoder.bias, 0.0);
  auto w = q.encoder.weight.mutable_data();
  for (std::size_t i = 0; i < c.window; ++i) {
    for (std::size_t j = 0; j < c.window; ++j) w[i * c.window + j] = i == j ? 1.0 : 0.0;
  }
  const Tensor z = encode(tape, q, x);
  EXPECT_TRUE(same_bits(z.data(), x.data()));
  EXPECT_THROW(encode(tape, q, Tensor::from({4, 3}, std::vector<double>(12))), DimensionError);
}

TEST(Encode, RowsAreIndependent) {
  const ModelParams p = ModelParams::init(toy_config(), 4, 4);
  const Tensor x = Tensor::from({4, 4}, random_values(16, 10));
  Tape tape(false);
  const Tensor z = encode(tape, p, x);
  for (std::size_t r = 0; r < 4; ++r) {
    const auto row = x.data().subspan(r * 4, 4);
    const Tensor single = encode(tape, p, Tensor::from({1, 4}, {row.begin(), row.end()}));
    EXPECT_TRUE(same_bits(single.data(), z.data().subspan(r * 6, 6)));
  }
}

TEST(Ecnum, SingleZeroLayerOutputsZero) {
  ModelConfig c = toy_config();
  c.ecnum_layers = 1;
  ModelParams p = ModelParams::init(c, 4, 5);
  for (const Tensor& t : {p.ecnum_input.feature_weight, p.ecnum_input.target_weight,
                          p.ecnum_input.source_weight, p.ecnum_input.bias}) {
    fill(t, 0.0);
  }
  Tape tape(false);
  const Tensor out = ecnum_transform(tape, p, Tensor::from({1, 6}, random_values(6, 1)),
                                     Tensor::from({1, 3}, random_values(3, 2)),
                                     Tensor::from({1, 3}, random_values(3, 3)));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Ecnum, ConditioningChangesOutput) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ModelParams p = ModelParams::init(toy_config(), 4, seed);
    Tape tape(false);
    const Tensor zj = Tensor::from({1, 6}, random_values(6, seed + 100));
    const Tensor v1 = Tensor::from({1, 3}, random_values(3, seed + 200));
    const Tensor v2 = Tensor::from({1, 3}, random_values(3, seed + 300));
    const Tensor vj = Tensor::from({1, 3}, random_values(3, seed + 400));
    const Tensor a = ecnum_transform(tape, p, zj, v1, vj);
    const Tensor b = ecnum_transform(tape, p, zj, v2, vj);
    const Tensor swapped = ecnum_transform(tape, p, zj, vj, v1);
    EXPECT_FALSE(same_bits(a.data(), b.data())) << "seed " << seed;
    EXPECT_FALSE(same_bits(a.data(), swapped.data())) << "seed " << seed;
  }
}

TEST(Ecnum, BlockFormMatchesConcatenation) {
  const ModelParams p = ModelParams::init(toy_config(), 5, 6);
  const Adjacency adj = extract_graph(p.embeddings, 2);
  const EdgeList edges = EdgeList::with_self_loops(adj);
  const std::size_t batch = 3;
  Tape tape(false);
  const Tensor z = Tensor::from({batch * 5, 6}, random_values(batch * 5 * 6, 7));
  const Tensor fast = ecnum_edges(tape, p, z, edges, batch);
  ASSERT_EQ(fast.rows(), batch * edges.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const std::size_t zs[] = {b * 5 + edges.source[e]};
      const std::size_t vt[] = {edges.target[e]};
      const std::size_t vs[] = {edges.source[e]};
      const Tensor ref =
          ecnum_transform(tape, p, ops::gather_rows(tape, z, zs), ops::gather_rows(tape, p.embeddings, vt),
                          ops::gather_rows(tape, p.embeddings, vs));
      for (std::size_t c = 0; c < 6; ++c) {
        EXPECT_NEAR(fast.at(b * edges.size() + e, c), ref.data()[c], 1e-12);
      }
    }
  }
}

TEST(EdgeListTest, TargetMajorSelfFirst) {
  Adjacency adj{2, {{1, 2}, {2, 0}, {0, 1}}};
  const EdgeList e = EdgeList::with_self_loops(adj);
  EXPECT_EQ(e.target, (std::vector<std::size_t>{0, 0, 0, 1, 1, 1, 2, 2, 2}));
  EXPECT_EQ(e.source, (std::vector<std::size_t>{0, 1, 2, 1, 2, 0, 2, 0, 1}));
  Adjacency self{1, {{0}, {0}}};
  EXPECT_THROW(EdgeList::with_self_loops(self), ContractError);
}

TEST(Aggregate, TwoTermCase) {
  Adjacency adj{1, {{1}, {0}}};
  const EdgeList edges = EdgeList::with_self_loops(adj);
  Tape tape(false);
  const Tensor t = Tensor::from({4, 2}, {1.0, -3.0, 0.5, 1.0, 2.0, 2.0, -1.0, -4.0});
  const Tensor out = aggregate(tape, t, edges, 1);
  EXPECT_EQ(out.at(0, 0), 1.5);
  EXPECT_EQ(out.at(0, 1), 0.0);
  EXPECT_EQ(out.at(1, 0), 1.0);
  EXPECT_EQ(out.at(1, 1), 0.0);
  const Tensor zero = aggregate(tape, Tensor::zeros({4, 2}), edges, 1);
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
}

TEST(Aggregate, MatchesTargetLoop) {
  const ModelParams p = ModelParams::init(toy_config(), 6, 8);
  const EdgeList edges = EdgeList::with_self_loops(extract_graph(p.embeddings, 2));
  const std::size_t batch = 2;
  Tape tape(false);
  const Tensor t = Tensor::from({batch * edges.size(), 6}, random_values(batch * edges.size() * 6, 9));
  const Tensor out = aggregate(tape, t, edges, batch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t c = 0; c < 6; ++c) {
        double acc = 0.0;
        for (std::size_t e = 0; e < edges.size(); ++e) {
          if (edges.target[e] == i) acc += t.at(b * edges.size() + e, c);
        }
        EXPECT_NEAR(out.at(b * 6 + i, c), std::max(acc, 0.0), 1e-12);
      }
    }
  }
}

TEST(Aggregate, MissingSelfEdgeIsContractError) {
  EdgeList edges{2, {0, 0, 1, 1}, {1, 1, 0, 0}};
  Tape tape(false);
  EXPECT_THROW(aggregate(tape, Tensor::zeros({4, 2}), edges, 1), ContractError);
}

TEST(Readout, ZeroProjectionGivesZero) {
  ModelParams p = ModelParams::init(toy_config(), 4, 10);
  fill(p.ncrm_output.weight, 0.0);
  fill(p.ncrm_output.bias, 0.0);
  Tape tape(false);
  const Tensor out = ncrm_readout(tape, p, Tensor::from({4, 6}, random_values(24, 11)));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Readout, NodeConditioningAndRowLoop) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ModelParams p = ModelParams::init(toy_config(), 4, seed);
    Tape tape(false);
    const auto row = random_values(6, seed + 50);
    std::vector<double> same_rows;
    for (int r = 0; r < 4; ++r) same_rows.insert(same_rows.end(), row.begin(), row.end());
    const Tensor out = ncrm_readout(tape, p, Tensor::from({4, 6}, same_rows));
    EXPECT_NE(out.data()[0], out.data()[1]) << "seed " << seed;

    const Tensor z = Tensor::from({8, 6}, random_values(48, seed + 60));
    const Tensor batch = ncrm_readout(tape, p, z);
    for (std::size_t b = 0; b < 2; ++b) {
      const auto block = z.data().subspan(b * 24, 24);
      const Tensor single = ncrm_readout(tape, p, Tensor::from({4, 6}, {block.begin(), block.end()}));
      EXPECT_TRUE(same_bits(single.data(), batch.data().subspan(b * 4, 4)));
    }
  }
  const ModelParams p = ModelParams::init(toy_config(), 4, 1);
  Tape tape(false);
  EXPECT_THROW(ncrm_readout(tape, p, Tensor::zeros({3, 6})), DimensionError);
}

TEST(Forward, OutputShape) {
  const ModelParams p = ModelParams::init(toy_config(), 5, 1);
  const Tensor out = predict_tensor(p, Tensor::from({10, 4}, random_values(40, 2)));
  EXPECT_EQ(out.shape(), (Shape{10, 1}));
  EXPECT_EQ(predict(p, random_values(20, 3)).size(), 5u);
}

TEST(Forward, PermutationEquivariance) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const std::size_t n = 6;
    const ModelParams p = ModelParams::init(toy_config(), n, seed);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(seed));
    ModelParams q = p.clone();
    auto qe = q.embeddings.mutable_data();
    const auto pe = p.embeddings.data();
    const auto x = random_values(n * 4, seed + 7);
    std::vector<double> xp(x.size());
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t d = 0; d < 3; ++d) qe[r * 3 + d] = pe[perm[r] * 3 + d];
      for (std::size_t j = 0; j < 4; ++j) xp[r * 4 + j] = x[perm[r] * 4 + j];
    }
    const auto out = predict(p, x);
    const auto out_perm = predict(q, xp);
    for (std::size_t r = 0; r < n; ++r) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(out_perm[r]), std::bit_cast<std::uint64_t>(out[perm[r]]));
    }
  }
}

TEST(Forward, NaivePerEdgeCopiesAreBitIdentical) {
  ModelConfig c = toy_config();
  c.embed_dim = 4;
  c.feature_dim = 8;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ModelParams p = ModelParams::init(c, 4, seed);
    const Adjacency adj = extract_graph(p.embeddings, c.top_k);
    const auto naive = testing::NaiveEdgeModel::copy_from(p, adj);
    const Tensor x = Tensor::from({4, 4}, random_values(16, seed + 30));
    Tape t1(false), t2(false);
    const Tensor shared = forward(t1, p, x, adj);
    const Tensor per_edge = naive.forward(t2, x);
    EXPECT_TRUE(same_bits(shared.data(), per_edge.data())) << "seed " << seed;

    const std::size_t n_edges = 4 * (c.top_k + 1);
    EXPECT_EQ(naive.parameter_count(), comparative_parameter_count(c, 4, n_edges));
    const std::size_t df = c.feature_dim, de = c.embed_dim;
    const std::size_t outside = (c.window * df + df) + ((df + de) * df + df) +
                                (c.ncrm_layers - 1) * (df * df + df) + (df + 1) + 4 * de;
    EXPECT_EQ(comparative_parameter_count(c, 4, n_edges),
              outside + n_edges * c.ecnum_layers * (df * df + df));
  }
}

TEST(Forward, EmbeddingGradientsReachEveryNode) {
  const std::size_t n = 6;
  ModelParams p = ModelParams::init(toy_config(), n, 12);
  const Tensor x = Tensor::from({2 * n, 4}, random_values(2 * n * 4, 13));
  const Tensor y = Tensor::from({2 * n, 1}, random_values(2 * n, 14));
  p.zero_grad();
  Tape tape;
  const Tensor loss = ops::mse(tape, forward(tape, p, x, extract_graph(p.embeddings, 2)), y);
  tape.backward(loss);
  const auto g = p.embeddings.grad();
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t d = 0; d < 3; ++d) norm += std::abs(g[i * 3 + d]);
    EXPECT_GT(norm, 0.0) << "node " << i;
  }
}

class ModelGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(ModelGradient, FullLossMatchesFiniteDifferences) {
  const std::uint64_t seed = GetParam();
  ModelConfig c = toy_config();
  c.ecnum_layers = 2;
  c.ncrm_layers = 2;
  // Unit embeddings keep the conditioning-weight gradients far above the
  // round-off floor of the central difference.
  c.embed_init_scale = 1.0;
  const std::size_t n = 5;
  const ModelParams p = ModelParams::init(c, n, seed);
  const Adjacency adj = extract_graph(p.embeddings, c.top_k);
  const Tensor x = Tensor::from({2 * n, c.window}, random_values(2 * n * c.window, seed + 1));
  const Tensor y = Tensor::from({2 * n, 1}, random_values(2 * n, seed + 2));
  const auto result = testing::check_gradients(p.parameters(), [&](Tape& tape) {
    return ops::mse(tape, forward(tape, p, x, adj), y);
  });
  EXPECT_LT(result.max_rel_error, 1e-4) << result.worst;
}

INSTANTIATE_TEST_SUITE_P(Seeds, ModelGradient, ::testing::Values(1, 2, 3, 4, 5));

TEST(Predict, BatchSizeDoesNotChangeBits) {
  const std::size_t n = 5;
  const ModelParams p = ModelParams::init(toy_config(), n, 15);
  RawSeries s = RawSeries::with_shape({"a", "b", "c", "d", "e"}, 40);
  s.values = random_values(n * 40, 16);
  const WindowedDataset windows = make_windows(s, 4);
  const auto ref = predict_all(p, windows, 1);
  for (std::size_t batch : {2u, 7u, 64u}) {
    const auto other = predict_all(p, windows, batch);
    ASSERT_EQ(other.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_TRUE(same_bits(other[i], ref[i]));
  }
  for (std::size_t i = 0; i < windows.size(); ++i) {
    EXPECT_TRUE(same_bits(predict(p, windows.input(i)), ref[i]));
  }
}

}  // namespace
}  // namespace ecnu
