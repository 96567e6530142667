#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "prereq/graph.hpp"
#include "prereq/model.hpp"
#include "support/gradcheck.hpp"

using namespace prereq;
using prereq::testing::away_from_zero;
using prereq::testing::gradcheck;
using prereq::testing::random_matrix;

namespace {

// 6-node graph: 2 concepts, 4 resources; three relations.
std::vector<Tensor> six_node_adjacency() {
  HeteroGraph g(2, 4);
  g.add_edge(EdgeType::ConceptConcept, 0, 1, 1.0);
  g.add_edge(EdgeType::ConceptResource, 0, 2, 0.7);
  g.add_edge(EdgeType::ConceptResource, 1, 3, 0.4);
  g.add_edge(EdgeType::ConceptResource, 1, 5, 0.9);
  g.add_edge(EdgeType::ResourceResource, 2, 4, 0.3);
  g.add_edge(EdgeType::ResourceResource, 3, 4, 0.6);
  const auto n = normalize(g);
  return {Tensor::constant(n[EdgeType::ConceptConcept]), Tensor::constant(n[EdgeType::ConceptResource]),
          Tensor::constant(n[EdgeType::ResourceResource])};
}

ModelConfig rvgae(int relations, int hidden = 4, int latent = 3) {
  ModelConfig c;
  c.encoder.variant = EncoderVariant::Rgcn;
  c.encoder.variational = true;
  c.encoder.hidden_dim = hidden;
  c.encoder.latent_dim = latent;
  c.encoder.num_relations = relations;
  return c;
}

Matrix plain_product(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

Matrix plain_relu(Matrix m) { return m.cwiseMax(0.0); }

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(GcnLayer, IdentityPassesRelu) {
  std::mt19937_64 rng(1);
  const Matrix h = random_matrix(3, 3, rng);
  const Tensor eye = Tensor::constant(Matrix::Identity(3, 3));
  EXPECT_EQ(gcn_layer(eye, Tensor::constant(h), eye, true).value(), plain_relu(h));
}

TEST(GcnLayer, TwoNodeHandFixture) {
  Matrix a(2, 2), h(2, 1), w(1, 2);
  a << 0.5, 0.5, 0.5, 0.5;  // normalized single edge
  h << 2, -4;
  w << 1, -1;
  // a h = [-1, -1]; times w = [[-1, 1], [-1, 1]]
  Matrix expect(2, 2);
  expect << 0, 1, 0, 1;
  EXPECT_EQ(gcn_layer(Tensor::constant(a), Tensor::constant(h), Tensor::constant(w), true).value(), expect);
  expect << -1, 1, -1, 1;
  EXPECT_EQ(gcn_layer(Tensor::constant(a), Tensor::constant(h), Tensor::constant(w), false).value(), expect);
}

TEST(GcnLayer, GradientCheck) {
  const auto adj = six_node_adjacency();
  for (int t = 0; t < 20; ++t) {
    std::mt19937_64 rng(10 + t);
    Tensor h = Tensor::parameter(random_matrix(6, 3, rng));
    Tensor w = Tensor::parameter(random_matrix(3, 2, rng));
    const Matrix up = random_matrix(6, 2, rng);
    EXPECT_LT(gradcheck([&] { return sum(mul(gcn_layer(adj[1], h, w, false), Tensor::constant(up))); }, {h, w}),
              1e-5);
  }
}

TEST(RgcnLayer, SingleIdentityRelation) {
  std::mt19937_64 rng(2);
  const Matrix h = random_matrix(3, 3, rng);
  const std::vector<Tensor> adjs{Tensor::constant(Matrix::Identity(3, 3))};
  const std::vector<Tensor> w{Tensor::constant(Matrix::Identity(3, 3))};
  const Tensor out = rgcn_layer(adjs, Tensor::constant(h), w, Tensor::constant(Matrix::Zero(3, 3)), true);
  EXPECT_LT((out.value() - plain_relu(h / 2.0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(RgcnLayer, TwoRelationHandCombination) {
  Matrix a1(3, 3), a2(3, 3), h(3, 2), w1(2, 2), w2(2, 2), w0(2, 2);
  a1 << 0.5, 0.5, 0, 0.5, 0.5, 0, 0, 0, 1;
  a2 << 1, 0, 0, 0, 0.5, 0.5, 0, 0.5, 0.5;
  h << 1, 2, -1, 0.5, 3, -2;
  w1 << 1, 0, 0, 1;
  w2 << 0, 1, 1, 0;
  w0 << 0.5, 0, 0, -0.5;
  const std::vector<Tensor> adjs{Tensor::constant(a1), Tensor::constant(a2)};
  const std::vector<Tensor> ws{Tensor::constant(w1), Tensor::constant(w2)};
  const Matrix got = rgcn_layer(adjs, Tensor::constant(h), ws, Tensor::constant(w0), false).value();
  // (a1 h w1 + h w0 + a2 h w2 + h w0) / 3, written out entrywise
  Matrix expect(3, 2);
  expect << (0 + 0.5 + 2 + 0.5) / 3.0, (1.25 - 1 + 1 - 1) / 3.0,  //
      (0 - 0.5 - 0.75 - 0.5) / 3.0, (1.25 - 0.25 + 1 - 0.25) / 3.0,  //
      (3 + 1.5 - 0.75 + 1.5) / 3.0, (-2 + 1 + 1 + 1) / 3.0;
  EXPECT_LT((got - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RgcnLayer, GradientCheckAllWeights) {
  const auto adj = six_node_adjacency();
  for (int t = 0; t < 20; ++t) {
    std::mt19937_64 rng(30 + t);
    Tensor h = Tensor::parameter(random_matrix(6, 3, rng));
    std::vector<Tensor> ws;
    for (int r = 0; r < 3; ++r) ws.push_back(Tensor::parameter(random_matrix(3, 2, rng)));
    Tensor w0 = Tensor::parameter(random_matrix(3, 2, rng));
    const Matrix up = random_matrix(6, 2, rng);
    EXPECT_LT(gradcheck([&] { return sum(mul(rgcn_layer(adj, h, ws, w0, false), Tensor::constant(up))); },
                        {h, ws[0], ws[1], ws[2], w0}),
              1e-5);
  }
}

TEST(RgcnLayer, MissingWeightsAreConfigErrors) {
  const auto adj = six_node_adjacency();
  Tensor h = Tensor::constant(Matrix::Ones(6, 2));
  const std::vector<Tensor> two{Tensor::constant(Matrix::Ones(2, 2)), Tensor::constant(Matrix::Ones(2, 2))};
  EXPECT_THROW(rgcn_layer(adj, h, two, Tensor::constant(Matrix::Ones(2, 2)), true), ConfigError);
  const std::vector<Tensor> three{two[0], two[0], two[0]};
  EXPECT_THROW(rgcn_layer(adj, h, three, Tensor{}, true), ConfigError);
}

TEST(Encode, ForcedLogSigmaCollapsesToMean) {
  const auto adj = six_node_adjacency();
  std::mt19937_64 rng(3);
  const Tensor x = Tensor::constant(random_matrix(6, 5, rng));
  const Model m = init_model(rvgae(3), 5, 11);
  EncodeOptions opt;
  opt.noise_seed = 99;
  opt.force_log_sigma = -40.0;
  const LatentState s = encode(m, adj, x, opt);
  EXPECT_LE((s.z.value() - s.mu.value()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(s.log_sigma.defined());
}

TEST(Encode, GcnEqualsRgcnAfterWeightTransplant) {
  const auto adj = six_node_adjacency();
  std::mt19937_64 rng(4);
  const Tensor x = Tensor::constant(random_matrix(6, 5, rng));
  ModelConfig gc;
  gc.encoder.variant = EncoderVariant::Gcn;
  gc.encoder.variational = false;
  gc.encoder.num_relations = 1;
  gc.encoder.hidden_dim = 4;
  gc.encoder.latent_dim = 3;
  const Model gcn = init_model(gc, 5, 1);
  ModelConfig rc = gc;
  rc.encoder.variant = EncoderVariant::Rgcn;
  Model rgcn = init_model(rc, 5, 2);
  // M = 2 weight matrices per layer: double the relation weights, zero the self weights
  rgcn.layer1.relation[0].mutable_value() = 2.0 * gcn.layer1.relation[0].value();
  rgcn.layer1.self.mutable_value().setZero();
  rgcn.mu_head.relation[0].mutable_value() = 2.0 * gcn.mu_head.relation[0].value();
  rgcn.mu_head.self.mutable_value().setZero();
  const std::vector<Tensor> one{adj[1]};
  const Matrix a = encode(gcn, one, x).z.value();
  const Matrix b = encode(rgcn, one, x).z.value();
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encode, FourNodeForwardMatchesDirectFormula) {
  HeteroGraph g(0, 4);
  g.add_edge(EdgeType::ResourceResource, 0, 1, 1.0);
  g.add_edge(EdgeType::ResourceResource, 1, 2, 0.5);
  g.add_edge(EdgeType::ResourceResource, 2, 3, 0.25);
  // hand-built D^-1/2 (A + I) D^-1/2
  Matrix a = Matrix::Identity(4, 4);
  a(0, 1) = a(1, 0) = 1.0;
  a(1, 2) = a(2, 1) = 0.5;
  a(2, 3) = a(3, 2) = 0.25;
  Matrix norm(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) norm(i, j) = a(i, j) / std::sqrt(a.row(i).sum() * a.row(j).sum());
  ModelConfig c;
  c.encoder.variant = EncoderVariant::Gcn;
  c.encoder.variational = false;
  c.encoder.num_relations = 1;
  c.encoder.hidden_dim = 3;
  c.encoder.latent_dim = 2;
  const Model m = init_model(c, 3, 5);
  std::mt19937_64 rng(6);
  const Matrix x = random_matrix(4, 3, rng);
  const Matrix expect = plain_product(
      plain_product(norm, plain_relu(plain_product(plain_product(norm, x), m.layer1.relation[0].value()))),
      m.mu_head.relation[0].value());
  const std::vector<Tensor> adjs{Tensor::constant(normalize(g)[EdgeType::ResourceResource])};
  EXPECT_LT((encode(m, adjs, Tensor::constant(x)).z.value() - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Decode, InnerProductExamples) {
  EXPECT_EQ(decode_inner_product(Tensor::constant(Matrix::Zero(3, 2))).value(), Matrix::Constant(3, 3, 0.5));
  Matrix z(3, 2);
  z << 1, 0, 0.5, -1, 2, 2;
  const Matrix s = decode_inner_product(Tensor::constant(z)).value();
  EXPECT_DOUBLE_EQ(s(0, 1), logistic(0.5));
  EXPECT_DOUBLE_EQ(s(1, 2), logistic(1 - 2));
  EXPECT_DOUBLE_EQ(s(2, 2), logistic(8));
  EXPECT_EQ((s - s.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Decode, BilinearExamples) {
  std::mt19937_64 rng(7);
  const Tensor z = Tensor::constant(random_matrix(4, 2, rng));
  EXPECT_LT((decode_bilinear(z, Tensor::constant(Matrix::Identity(2, 2))).value() -
             decode_inner_product(z).value())
                .cwiseAbs()
                .maxCoeff(),
            1e-15);

  Matrix zz(2, 2), r(2, 2);
  zz << 1, 2, -1, 1;
  r << 2, 0, 0, 0.5;
  const Matrix s = decode_bilinear(Tensor::constant(zz), Tensor::constant(r)).value();
  EXPECT_DOUBLE_EQ(s(0, 0), logistic(2 + 2));
  EXPECT_DOUBLE_EQ(s(0, 1), logistic(-2 + 1));
  EXPECT_DOUBLE_EQ(s(1, 1), logistic(2 + 0.5));
  Matrix diag(1, 2);
  diag << 2, 0.5;
  EXPECT_EQ(decode_bilinear(Tensor::constant(zz), Tensor::constant(diag)).value(), s);

  Matrix anti(2, 2);
  anti << 0, 1, 0, 0;
  const Matrix d = decode_bilinear(Tensor::constant(zz), Tensor::constant(anti)).value();
  EXPECT_GT((d - d.transpose()).cwiseAbs().maxCoeff(), 0.1);

  Matrix sym = random_matrix(2, 2, rng);
  sym = (sym + sym.transpose()).eval();
  const Matrix e = decode_bilinear(z, Tensor::constant(sym)).value();
  EXPECT_LT((e - e.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_THROW(decode_bilinear(z, Tensor::constant(Matrix::Identity(3, 3))), DimensionError);
}

TEST(Decode, PairsAgreeWithFullMatrix) {
  std::mt19937_64 rng(8);
  for (auto kind : {DecoderKind::InnerProduct, DecoderKind::Bilinear, DecoderKind::Diagonal}) {
    ModelConfig c = rvgae(2);
    c.decoder = kind;
    const Model m = init_model(c, 4, 3);
    const Tensor z = Tensor::constant(random_matrix(5, 3, rng));
    const std::vector<ConceptPair> pairs{{0, 1}, {1, 0}, {4, 2}, {3, 3}};
    const Matrix full = decode(m, z).value();
    const Matrix got = decode_pairs(m, z, pairs).value();
    for (std::size_t k = 0; k < pairs.size(); ++k)
      EXPECT_NEAR(got(static_cast<Eigen::Index>(k), 0), full(pairs[k].first, pairs[k].second), 1e-14);
  }
}

TEST(Kl, ClosedFormExamples) {
  EXPECT_EQ(kl_loss(Tensor::constant(Matrix::Zero(4, 3)), Tensor::constant(Matrix::Zero(4, 3))).item(), 0.0);
  EXPECT_DOUBLE_EQ(kl_loss(Tensor::constant(Matrix::Ones(1, 1)), Tensor::constant(Matrix::Zero(1, 1))).item(), 0.5);
}

TEST(Kl, NonNegativeOnRandomInputs) {
  for (int t = 0; t < 200; ++t) {
    std::mt19937_64 rng(40 + t);
    const Tensor mu = Tensor::constant(random_matrix(5, 3, rng, -3, 3));
    const Tensor ls = Tensor::constant(random_matrix(5, 3, rng, -3, 3));
    EXPECT_GE(kl_loss(mu, ls).item(), 0.0);
  }
}

TEST(Kl, MatchesMonteCarloEstimate) {
  std::mt19937_64 rng(12);
  const Matrix mu = random_matrix(3, 2, rng, -1.5, 1.5);
  const Matrix ls = random_matrix(3, 2, rng, -1.0, 0.5);
  std::normal_distribution<double> normal(0, 1);
  constexpr int kSamples = 1000000;
  double total = 0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double m = mu.data()[i];
    const double s = std::exp(ls.data()[i]);
    double acc = 0;
    for (int k = 0; k < kSamples; ++k) {
      const double eps = normal(rng);
      const double z = m + s * eps;
      // log q(z) - log p(z); the 2*pi terms cancel
      acc += (-0.5 * eps * eps - std::log(s)) - (-0.5 * z * z);
    }
    total += acc / kSamples;
  }
  const double n = static_cast<double>(mu.rows());
  const double mc = total / (n * n);
  const double exact = kl_loss(Tensor::constant(mu), Tensor::constant(ls)).item();
  EXPECT_LT(std::abs(mc - exact) / exact, 0.02) << "mc " << mc << " exact " << exact;
}

TEST(Reconstruction, Examples) {
  const Tensor half = Tensor::constant(Matrix::Constant(3, 3, 0.5));
  const std::vector<ConceptPair> pos{{0, 1}, {1, 2}};
  const std::vector<ConceptPair> neg{{2, 0}, {1, 0}};
  EXPECT_NEAR(reconstruction_loss(half, pos, neg).item(), std::log(2.0), 1e-15);

  Matrix perfect = Matrix::Zero(3, 3);
  perfect(0, 1) = perfect(1, 2) = 1.0;
  EXPECT_LT(reconstruction_loss(Tensor::constant(perfect), pos, neg).item(), 1e-6);

  Matrix s(3, 3);
  s << 0.5, 0.9, 0.1, 0.3, 0.5, 0.6, 0.2, 0.5, 0.5;
  const double hand = -(std::log(0.9) + std::log(0.6) + std::log(1 - 0.2) + std::log(1 - 0.3)) / 4;
  EXPECT_NEAR(reconstruction_loss(Tensor::constant(s), pos, neg).item(), hand, 1e-12);
  EXPECT_THROW(reconstruction_loss(half, {}, neg), ValidationError);
}

TEST(TotalLoss, IsReconstructionPlusKl) {
  const auto adj = six_node_adjacency();
  std::mt19937_64 rng(13);
  const Tensor x = Tensor::constant(random_matrix(6, 4, rng));
  const Model m = init_model(rvgae(3), 4, 17);
  EncodeOptions opt;
  opt.noise_seed = 5;
  const LatentState s = encode(m, adj, x, opt);
  const std::vector<ConceptPair> pos{{0, 1}, {0, 2}, {3, 4}};
  const std::vector<ConceptPair> neg{{1, 0}, {5, 2}, {4, 1}};
  const LossTerms l = total_loss(m, s, pos, neg);
  EXPECT_EQ(l.total.item(), l.reconstruction.item() + l.kl.item());
}

TEST(TotalLoss, EndToEndGradientCheck) {
  const auto adj = six_node_adjacency();
  const std::vector<ConceptPair> pos{{0, 1}, {0, 2}, {1, 3}, {2, 4}};
  const std::vector<ConceptPair> neg{{1, 0}, {5, 2}, {4, 1}, {3, 0}};
  const std::vector<ConceptPair> cpos{{0, 1}};
  const std::vector<ConceptPair> cneg{{1, 0}};
  for (int t = 0; t < 20; ++t) {
    std::mt19937_64 rng(60 + t);
    const Tensor x = Tensor::constant(away_from_zero(random_matrix(6, 4, rng)));
    const Model m = init_model(rvgae(3), 4, 100 + static_cast<std::uint64_t>(t));
    EncodeOptions opt;
    opt.noise_seed = 7 + static_cast<std::uint64_t>(t);
    const std::vector<TargetBlock> blocks{{pos, neg}, {cpos, cneg}};
    const double err = gradcheck([&] { return total_loss(m, encode(m, adj, x, opt), blocks).total; }, m.parameters());
    EXPECT_LT(err, 1e-4) << "trial " << t;
  }
}

TEST(Variational, ZeroNoiseMatchesDeterministicForward) {
  const auto adj = six_node_adjacency();
  std::mt19937_64 rng(14);
  const Tensor x = Tensor::constant(random_matrix(6, 4, rng));
  const Model v = init_model(rvgae(3), 4, 21);
  ModelConfig dc = v.config;
  dc.encoder.variational = false;
  Model d = init_model(dc, 4, 22);
  d.layer1 = v.layer1;
  d.mu_head = v.mu_head;
  d.decoder = v.decoder;
  EncodeOptions opt;
  opt.force_log_sigma = -40.0;
  opt.noise_seed = 3;
  const Matrix sv = decode(v, encode(v, adj, x, opt).z).value();
  const Matrix sd = decode(d, encode(d, adj, x).z).value();
  EXPECT_LT((sv - sd).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ModelCheckpoint, RoundTripPreservesParametersAndOutputs) {
  const auto adj = six_node_adjacency();
  std::mt19937_64 rng(15);
  const Tensor x = Tensor::constant(random_matrix(6, 4, rng));
  for (auto kind : {DecoderKind::InnerProduct, DecoderKind::Bilinear, DecoderKind::Diagonal}) {
    ModelConfig c = rvgae(3);
    c.decoder = kind;
    const Model m = init_model(c, 4, 8);
    const Model back = model_from_checkpoint(parse_checkpoint(serialize_checkpoint(model_checkpoint(m))));
    const auto a = m.named_parameters();
    const auto b = back.named_parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_EQ(a[k].first, b[k].first);
      EXPECT_EQ(a[k].second.value(), b[k].second.value());
    }
    EncodeOptions opt;
    opt.sample = false;
    EXPECT_EQ(decode(m, encode(m, adj, x, opt).z).value(), decode(back, encode(back, adj, x, opt).z).value());
  }
}

TEST(Init, SeededAndValidated) {
  const Model a = init_model(rvgae(2), 4, 1);
  const Model b = init_model(rvgae(2), 4, 1);
  EXPECT_EQ(a.layer1.relation[0].value(), b.layer1.relation[0].value());
  EXPECT_NE(a.layer1.relation[0].value(), init_model(rvgae(2), 4, 2).layer1.relation[0].value());
  EXPECT_THROW(init_model(rvgae(2, 0), 4, 1), ConfigError);
  EXPECT_THROW(init_model(rvgae(5), 4, 1), ConfigError);
}
