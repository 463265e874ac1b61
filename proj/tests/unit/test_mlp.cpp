#include <filesystem>

#include <gtest/gtest.h>

#include "duskill/error.hpp"
#include "duskill/nn/mlp.hpp"
#include "duskill/nn/tensor_io.hpp"
#include "duskill/rng.hpp"

using namespace duskill;
using nn::Mlp;

namespace {

// Loss sum(c .* f(x)) so that dL/dy = c.
double probe(const Mlp<double>& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& c) {
  return net.forward(x).cwiseProduct(c).sum();
}

}  // namespace

TEST(Mlp, ShapesAndParameterCount) {
  Rng rng(1);
  Mlp<double> net(nn::make_shape(3, 5, 2, 4), rng);
  EXPECT_EQ(net.num_params(), (3 * 5 + 5) + (5 * 5 + 5) + (5 * 4 + 4));
  EXPECT_EQ(net.forward(Eigen::MatrixXd::Zero(3, 7)).rows(), 4);
  EXPECT_THROW(net.forward(Eigen::MatrixXd::Zero(2, 7)), ContractError);
}

TEST(Mlp, ForwardMatchesHandComputation) {
  Rng rng(2);
  Mlp<double> net(nn::make_shape(2, 3, 1, 1), rng);
  Eigen::MatrixXd x(2, 1);
  x << 0.4, -0.9;
  Eigen::VectorXd h = net.weight(0) * x + net.bias(0);
  for (int i = 0; i < 3; ++i) h(i) = h(i) / (1.0 + std::exp(-h(i)));
  const double y = (net.weight(1) * h + net.bias(1))(0);
  EXPECT_NEAR(net.forward(x)(0, 0), y, 1e-14);
  Mlp<double>::Cache cache;
  EXPECT_NEAR(net.forward(x, cache)(0, 0), y, 1e-14);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  Rng rng(3);
  Mlp<double> net(nn::make_shape(4, 6, 3, 3), rng);
  const Eigen::MatrixXd x = rng.normal_matrix<double>(4, 5);
  const Eigen::MatrixXd c = rng.normal_matrix<double>(3, 5);
  Mlp<double>::Cache cache;
  net.forward(x, cache);
  Eigen::VectorXd grad;
  const Eigen::MatrixXd dx = net.backward(cache, c, &grad);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < net.num_params(); ++i) {
    Mlp<double> a = net, b = net;
    a.params()(i) += h;
    b.params()(i) -= h;
    const double fd = (probe(a, x, c) - probe(b, x, c)) / (2 * h);
    EXPECT_NEAR(grad(i), fd, 1e-7 * std::max(1.0, std::abs(fd))) << "param " << i;
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::MatrixXd xa = x, xb = x;
    xa(i) += h;
    xb(i) -= h;
    EXPECT_NEAR(dx(i), (probe(net, xa, c) - probe(net, xb, c)) / (2 * h), 1e-7);
  }
}

TEST(Mlp, GradientsAccumulate) {
  Rng rng(4);
  Mlp<double> net(nn::make_shape(2, 4, 1, 2), rng);
  const Eigen::MatrixXd x = rng.normal_matrix<double>(2, 3), c = rng.normal_matrix<double>(2, 3);
  Mlp<double>::Cache cache;
  net.forward(x, cache);
  Eigen::VectorXd once, twice;
  net.backward(cache, c, &once, false);
  net.backward(cache, c, &twice, false);
  net.backward(cache, c, &twice, false);
  EXPECT_LT((twice - 2 * once).norm(), 1e-12);
}

TEST(Mlp, CastPreservesFunction) {
  Rng rng(5);
  Mlp<float> net(nn::make_shape(3, 8, 2, 2), rng);
  const Eigen::MatrixXf x = rng.normal_matrix<float>(3, 4);
  const Eigen::MatrixXd yd = net.cast<double>().forward(x.cast<double>());
  EXPECT_LT((yd.cast<float>() - net.forward(x)).cwiseAbs().maxCoeff(), 1e-5f);
}

TEST(Mlp, SameSeedSameInit) {
  Rng a(9), b(9);
  EXPECT_EQ(Mlp<float>(nn::make_shape(3, 8, 2, 2), a).params(), Mlp<float>(nn::make_shape(3, 8, 2, 2), b).params());
}

TEST(Adam, FirstStepHasLearningRateMagnitude) {
  nn::Adam<double> opt(0.01);
  Eigen::VectorXd p(3), g(3);
  p << 1.0, -2.0, 0.5;
  g << 3.0, -0.001, 100.0;
  Eigen::VectorXd before = p;
  opt.step(p, g);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(before(i) - p(i), 0.01 * (g(i) > 0 ? 1 : -1), 1e-6);
}

TEST(Adam, MinimizesQuadratic) {
  nn::Adam<double> opt(0.05);
  Eigen::VectorXd p = Eigen::VectorXd::Constant(4, 3.0), target(4);
  target << 1.0, -1.0, 0.0, 2.0;
  for (int i = 0; i < 2000; ++i) opt.step(p, 2.0 * (p - target));
  EXPECT_LT((p - target).norm(), 1e-3);
  Eigen::VectorXd wrong(2);
  EXPECT_THROW(opt.step(p, wrong), ContractError);
}

TEST(TensorIo, RoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "duskill_tensor_io_test.bin";
  std::vector<nn::NamedTensor> in{{"layer0.weight", {2, 3}, {1, 2, 3, 4, 5, 6.5f}}, {"layer0.bias", {2}, {-1e-7f, 3e8f}}};
  nn::write_tensor_file(path, in);
  const auto out = nn::read_tensor_file(path);
  ASSERT_EQ(out.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(out[i].name, in[i].name);
    EXPECT_EQ(out[i].shape, in[i].shape);
    EXPECT_EQ(out[i].data, in[i].data);
  }
  nn::write_file_bytes(path, "garbage");
  EXPECT_THROW(nn::read_tensor_file(path), FileError);
  std::filesystem::remove(path);
  EXPECT_THROW(nn::read_tensor_file(path), FileError);
}
