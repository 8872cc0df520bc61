#include <cmath>
#include <numbers>

#include "doctest.h"
#include "mkmmd/checkpoint.hpp"
#include "mkmmd/errors.hpp"
#include "mkmmd/network.hpp"
#include "mkmmd/rng.hpp"
#include "net_helpers.hpp"
#include "oracles.hpp"

using namespace mkmmd;

namespace {

Network single_layer(Activation act, Index width) {
  std::vector<LayerSpec> specs{{width, width, act, Trainability::finetune, 1.0}};
  NetworkParams params{{MatrixXd::Identity(width, width), VectorXd::Zero(width)}};
  return Network(specs, params);
}

double batch_loss(const Network& net, const MatrixXd& x, const std::vector<int>& labels,
                  const std::vector<MatrixXd>& probes) {
  const auto cache = net.forward(x);
  double loss = 0.0;
  for (Index i = 0; i < x.rows(); ++i) loss += cross_entropy(cache.probs.row(i).transpose(), labels[i]);
  for (std::size_t l = 0; l < probes.size(); ++l) {
    if (probes[l].size() > 0) loss += (probes[l].array() * cache.hidden[l].array()).sum();
  }
  return loss;
}

}  // namespace

TEST_CASE("forward: identity layer returns its input") {
  const auto net = single_layer(Activation::identity, 3);
  const VectorXd x = (VectorXd(3) << 0.3, -1.2, 4.0).finished();
  const auto out = net.forward(x);
  CHECK(out.hidden[0] == x);
}

TEST_CASE("forward: rectifier clips negatives") {
  const auto net = single_layer(Activation::rectifier, 2);
  const auto out = net.forward(VectorXd((VectorXd(2) << -1.0, 2.0).finished()));
  CHECK(out.hidden[0](0) == 0.0);
  CHECK(out.hidden[0](1) == 2.0);
}

TEST_CASE("forward: softmax of equal logits is uniform and sums to one") {
  const auto net = single_layer(Activation::softmax, 2);
  const auto out = net.forward(VectorXd(VectorXd::Zero(2)));
  CHECK(out.probs(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.probs(1) == doctest::Approx(0.5).epsilon(1e-15));

  const auto big = Network::initialize(make_classifier_specs(4, std::vector<Index>{8, 8}, 5), 3);
  Rng rng(1);
  MatrixXd x(20, 4);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = 5.0 * rng.normal();
  const auto cache = big.forward(x);
  for (Index i = 0; i < x.rows(); ++i) CHECK(std::abs(cache.probs.row(i).sum() - 1.0) <= 1e-9);
}

TEST_CASE("forward: shape and softmax placement errors") {
  const auto net = single_layer(Activation::identity, 2);
  CHECK_THROWS_AS(net.forward(VectorXd(VectorXd::Zero(3))), InputError);
  std::vector<LayerSpec> specs{{2, 2, Activation::softmax, Trainability::finetune, 1.0},
                               {2, 2, Activation::identity, Trainability::finetune, 1.0}};
  NetworkParams params{{MatrixXd::Identity(2, 2), VectorXd::Zero(2)}, {MatrixXd::Identity(2, 2), VectorXd::Zero(2)}};
  CHECK_THROWS_AS(Network(specs, params), InputError);
}

TEST_CASE("cross_entropy values") {
  CHECK(cross_entropy((VectorXd(2) << 1.0, 0.0).finished(), 0) == 0.0);
  CHECK(cross_entropy((VectorXd(2) << 0.5, 0.5).finished(), 1) == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
  // -ln 0.1 evaluated independently
  CHECK(cross_entropy((VectorXd(2) << 0.9, 0.1).finished(), 1) == doctest::Approx(2.302585092994046).epsilon(1e-12));
  CHECK(cross_entropy((VectorXd(2) << 1.0, 0.0).finished(), 1) == doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(cross_entropy((VectorXd(2) << 0.5, 0.5).finished(), 2), InputError);
}

TEST_CASE("backward: one-hot correct prediction gives zero output-layer gradient") {
  // Identity output layer feeding an implicit softmax: huge logit margin.
  std::vector<LayerSpec> specs{{2, 2, Activation::softmax, Trainability::train_scratch, 10.0}};
  NetworkParams params{{MatrixXd::Zero(2, 2), (VectorXd(2) << 1000.0, -1000.0).finished()}};
  const Network net(specs, params);
  const auto grads = net.backward(VectorXd::Ones(2), 0);
  CHECK(grads[0].weight.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads[0].bias.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: rectifier gate blocks gradient of inactive units") {
  std::vector<LayerSpec> specs{{2, 2, Activation::rectifier, Trainability::finetune, 1.0},
                               {2, 2, Activation::softmax, Trainability::train_scratch, 10.0}};
  NetworkParams params{{MatrixXd::Identity(2, 2), VectorXd::Zero(2)},
                       {(MatrixXd(2, 2) << 1.0, 2.0, -1.0, 0.5).finished(), VectorXd::Zero(2)}};
  const Network net(specs, params);
  // Unit 0 has pre-activation -1 < 0, unit 1 has +2.
  const auto grads = net.backward((VectorXd(2) << -1.0, 2.0).finished(), 1);
  CHECK(grads[0].weight.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads[0].bias(0) == 0.0);
  CHECK(grads[0].bias(1) != 0.0);
}

TEST_CASE("backward: frozen layers receive zero gradient but pass it on") {
  auto specs = make_classifier_specs(3, std::vector<Index>{4, 4}, 2);
  specs[1].trainability = Trainability::frozen;
  const auto net = Network::initialize(specs, 11);
  const auto grads = net.backward((VectorXd(3) << 0.5, -0.2, 0.9).finished(), 1);
  CHECK(grads[1].weight.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads[1].bias.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads[0].weight.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("backward: matches central finite differences on random nets") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    Rng rng(seed);
    const Index input = 1 + static_cast<Index>(rng.below(4));
    std::vector<Index> hidden;
    const auto depth = rng.below(3);  // 0..2 hidden layers, <= 3 layers total
    for (std::uint64_t l = 0; l < depth; ++l) hidden.push_back(2 + static_cast<Index>(rng.below(15)));
    const Index classes = 2 + static_cast<Index>(rng.below(3));
    auto specs = make_classifier_specs(input, hidden, classes);
    if (seed % 3 == 0) specs.back().activation = Activation::identity;
    auto net = Network::initialize(specs, seed);
    // Non-zero biases so no rectifier sits exactly on its kink.
    for (auto& p : net.mutable_params()) {
      for (Index i = 0; i < p.bias.size(); ++i) p.bias(i) = 0.1 * rng.normal();
    }

    MatrixXd x(5, input);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    std::vector<int> labels;
    for (int i = 0; i < 5; ++i) labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
    std::vector<MatrixXd> probes(net.layer_count());
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      probes[l] = MatrixXd(5, specs[l].output_width);
      for (Index i = 0; i < probes[l].size(); ++i) probes[l].data()[i] = 0.3 * rng.normal();
    }

    const auto grads = net.backward(net.forward(x), labels, 1.0, probes);
    const VectorXd analytic = testing_util::flatten(grads);
    const VectorXd numeric = oracle::central_difference(
        [&](const VectorXd& theta) { return batch_loss(testing_util::with_params(net, theta), x, labels, probes); },
        testing_util::flatten(net.params()), 1e-5);
    for (Index i = 0; i < analytic.size(); ++i) {
      INFO("seed " << seed << " coordinate " << i);
      CHECK(oracle::relative_error(analytic(i), numeric(i)) <= 1e-4);
    }
  }
}

TEST_CASE("sgd: plain gradient step with zero momentum and constant schedule") {
  auto net = Network::initialize(make_classifier_specs(2, std::vector<Index>{3}, 2), 5);
  const auto before = net.params();
  auto grads = net.zero_gradients();
  for (auto& g : grads) {
    g.weight.setConstant(0.5);
    g.bias.setConstant(-0.25);
  }
  SgdMomentum sgd(net, 0.1, 0.0, LrSchedule::constant());
  sgd.step(net, grads, 0);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const double lr = 0.1 * net.specs()[l].lr_multiplier;
    CHECK(net.params()[l].weight == (before[l].weight.array() - lr * 0.5).matrix());
    CHECK(net.params()[l].bias == (before[l].bias.array() + lr * 0.25).matrix());
  }
}

TEST_CASE("sgd: zero gradient and velocity leave parameters unchanged") {
  auto net = Network::initialize(make_classifier_specs(2, std::vector<Index>{3}, 2), 5);
  const auto before = testing_util::flatten(net.params());
  SgdMomentum sgd(net, 0.1);
  sgd.step(net, net.zero_gradients(), 7);
  CHECK(testing_util::flatten(net.params()) == before);
}

TEST_CASE("sgd: inv schedule and non-finite gradients") {
  LrSchedule inv;
  CHECK(inv.factor(0) == 1.0);
  CHECK(inv.factor(1000) == doctest::Approx(std::pow(2.0, -0.75)));

  auto net = Network::initialize(make_classifier_specs(2, std::vector<Index>{3}, 2), 5);
  const auto before = testing_util::flatten(net.params());
  auto grads = net.zero_gradients();
  grads[1].weight(0, 0) = std::nan("");
  SgdMomentum sgd(net, 0.1);
  CHECK_THROWS_AS(sgd.step(net, grads, 0), NumericError);
  CHECK(testing_util::flatten(net.params()) == before);
}

TEST_CASE("sgd: frozen layers stay bit-identical over many steps") {
  auto specs = make_classifier_specs(2, std::vector<Index>{4, 4}, 2);
  specs[0].trainability = Trainability::frozen;
  auto net = Network::initialize(specs, 9);
  const MatrixXd w0 = net.params()[0].weight;
  const VectorXd b0 = net.params()[0].bias;
  SgdMomentum sgd(net, 0.05);
  Rng rng(2);
  for (int step = 0; step < 50; ++step) {
    const VectorXd x = (VectorXd(2) << rng.normal(), rng.normal()).finished();
    sgd.step(net, net.backward(x, static_cast<int>(rng.below(2))), step);
  }
  CHECK(net.params()[0].weight == w0);
  CHECK(net.params()[0].bias == b0);
  CHECK(net.params()[2].weight != Network::initialize(specs, 9).params()[2].weight);
}

TEST_CASE("initialization is deterministic and scaled by fan-in") {
  const auto specs = make_classifier_specs(9, std::vector<Index>{16}, 3);
  const auto a = Network::initialize(specs, 42);
  const auto b = Network::initialize(specs, 42);
  CHECK(testing_util::flatten(a.params()) == testing_util::flatten(b.params()));
  CHECK(a.params()[0].weight.cwiseAbs().maxCoeff() <= 1.0 / 3.0);
  CHECK(a.params()[0].bias.isZero(0.0));
  CHECK(a.specs()[0].trainability == Trainability::finetune);
  CHECK(a.specs()[1].lr_multiplier == 10.0);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  auto specs = make_classifier_specs(3, std::vector<Index>{5, 4}, 2);
  specs[0].trainability = Trainability::frozen;
  auto net = Network::initialize(specs, 77);
  net.mutable_params()[1].bias(2) = 1.0 / 3.0;
  const std::string bytes = serialize_network(net);
  CHECK(bytes.substr(0, 8) == "MKMMDNET");
  const Network back = deserialize_network(bytes);
  CHECK(back.specs() == net.specs());
  CHECK(serialize_network(back) == bytes);
  CHECK(testing_util::flatten(back.params()) == testing_util::flatten(net.params()));

  CHECK_THROWS_AS(deserialize_network("NOTMAGIC" + bytes.substr(8)), ParseError);
  CHECK_THROWS_AS(deserialize_network(bytes.substr(0, bytes.size() - 3)), ParseError);
}
