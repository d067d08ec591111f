#include <catch_amalgamated.hpp>

#include "layoutgkn/autodiff.hpp"
#include "support.hpp"

using namespace lgkn;
using namespace lgkn::ad;
using testing::random_matrix;

namespace {

Tensor param(std::mt19937_64& rng, int r, int c, double scale = 1.0) { return Tensor(random_matrix(rng, r, c, scale), true); }

// Reduces any tensor to a scalar through a fixed random projection, so every output entry
// carries a distinct weight in the gradient.
Tensor project(const Tensor& t, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return frobenius_dot(constant(random_matrix(rng, t.rows(), t.cols())), t);
}

double check(const std::function<Tensor()>& f, std::vector<Tensor> inputs) { return grad_check(f, inputs); }

}  // namespace

TEST_CASE("backward of sum is all ones") {
  Tensor x = Tensor(Matrix::Random(3, 4), true);
  Tape tape;
  {
    TapeScope s(tape);
    tape.backward(sum(x));
  }
  CHECK(x.grad() == Matrix::Ones(3, 4));
}

TEST_CASE("backward of sqdist with respect to u is 2(u - v)") {
  std::mt19937_64 rng(1);
  Tensor u = param(rng, 1, 5), v = param(rng, 1, 5);
  Tape tape;
  {
    TapeScope s(tape);
    tape.backward(sqdist(u, v));
  }
  CHECK((u.grad() - 2 * (u.value() - v.value())).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((v.grad() + 2 * (u.value() - v.value())).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("every op matches central finite differences") {
  std::mt19937_64 rng(2);
  Tensor a = param(rng, 3, 4), b = param(rng, 3, 4), row = param(rng, 1, 4), w = param(rng, 4, 3);
  Tensor pos = Tensor(random_matrix(rng, 3, 4).cwiseAbs().array() + 0.5, true);
  Tensor gamma = param(rng, 1, 4), beta = param(rng, 1, 4);
  const double tol = 1e-6;

  CHECK(check([&] { return project(matmul(a, w)); }, {a, w}) < tol);
  CHECK(check([&] { return project(transpose(a)); }, {a}) < tol);
  CHECK(check([&] { return project(add(a, b)); }, {a, b}) < tol);
  CHECK(check([&] { return project(add(a, row)); }, {a, row}) < tol);
  CHECK(check([&] { return project(sub(a, b)); }, {a, b}) < tol);
  CHECK(check([&] { return project(sub(a, row)); }, {a, row}) < tol);
  CHECK(check([&] { return project(mul(a, b)); }, {a, b}) < tol);
  CHECK(check([&] { return project(scale(a, -1.7)); }, {a}) < tol);
  CHECK(check([&] { return project(shift(a, 0.3)); }, {a}) < tol);
  CHECK(check([&] { return project(concat_cols({a, b, a})); }, {a, b}) < tol);
  CHECK(check([&] { return project(concat_rows({a, row})); }, {a, row}) < tol);
  CHECK(check([&] { return project(slice_cols(a, 1, 2)); }, {a}) < tol);
  CHECK(check([&] { return project(slice_rows(a, 1, 2)); }, {a}) < tol);
  CHECK(check([&] { return project(gather_rows(a, {2, 0, 2, 1})); }, {a}) < tol);
  CHECK(check([&] { return project(segment_sum(a, {1, 0, 1}, 2)); }, {a}) < tol);
  CHECK(check([&] { return project(segment_mean(a, {1, 0, 1}, 3)); }, {a}) < tol);
  CHECK(check([&] { return project(row_sum(a)); }, {a}) < tol);
  CHECK(check([&] { return project(mean_rows(a)); }, {a}) < tol);
  CHECK(check([&] { return sum(a); }, {a}) < tol);
  CHECK(check([&] { return project(relu(a)); }, {a}) < tol);
  CHECK(check([&] { return project(sigmoid(a)); }, {a}) < tol);
  CHECK(check([&] { return project(tanh(a)); }, {a}) < tol);
  CHECK(check([&] { return project(exp(a)); }, {a}) < tol);
  CHECK(check([&] { return project(log(pos)); }, {pos}) < tol);
  CHECK(check([&] { return project(square(a)); }, {a}) < tol);
  CHECK(check([&] { return project(sqrt(pos)); }, {pos}) < tol);
  CHECK(check([&] { return project(sqdist(a, b)); }, {a, b}) < tol);
  CHECK(check([&] { return project(softmax_rows(a)); }, {a}) < tol);
  CHECK(check([&] { return frobenius_dot(a, b); }, {a, b}) < tol);
  CHECK(check([&] { return project(layernorm(a, gamma, beta)); }, {a, gamma, beta}) < tol);
  BatchNormState st(4);
  CHECK(check(
            [&] {
              BatchNormState scratch = st;
              return project(batchnorm(a, gamma, beta, scratch, true));
            },
            {a, gamma, beta}) < tol);
  CHECK(check([&] { return project(batchnorm_eval(a, gamma, beta, st)); }, {a, gamma, beta}) < tol);
}

TEST_CASE("grad_check contract") {
  std::mt19937_64 rng(3);
  Tensor x = param(rng, 3, 4);
  Tensor frozen(random_matrix(rng, 3, 4));
  CHECK(grad_check([&] { return sum(square(x)); }, std::vector<Tensor>{x}) < 1e-8);
  CHECK(grad_check([&] { return sum(mul(x, frozen)); }, std::vector<Tensor>{x, frozen}) < 1e-8);
  CHECK_THROWS_AS(grad_check([&] { return square(x); }, std::vector<Tensor>{x}), InvalidArgument);
}

TEST_CASE("gradients accumulate linearly") {
  std::mt19937_64 rng(4);
  Tensor x = param(rng, 2, 3);
  auto grad_of = [&](const std::function<Tensor()>& f) {
    x.zero_grad();
    Tape tape;
    TapeScope s(tape);
    tape.backward(f());
    return Matrix(x.grad());
  };
  Matrix gf = grad_of([&] { return sum(exp(x)); });
  Matrix gg = grad_of([&] { return project(tanh(x)); });
  Matrix both = grad_of([&] { return add(sum(exp(x)), project(tanh(x))); });
  CHECK((both - gf - gg).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("tape replay twice is an error, reset allows reuse") {
  Tensor x(Matrix::Ones(2, 2), true);
  Tape tape;
  TapeScope s(tape);
  Tensor y = sum(x);
  tape.backward(y);
  CHECK_THROWS_AS(tape.backward(y), std::logic_error);
  tape.reset();
  x.zero_grad();
  tape.backward(sum(square(x)));
  CHECK(x.grad() == Matrix::Constant(2, 2, 2.0));
}

TEST_CASE("backward replays in reverse recording order") {
  Tensor x(Matrix::Constant(1, 1, 0.5), true);
  Tape tape;
  TapeScope s(tape);
  Tensor y = exp(tanh(scale(x, 3.0)));
  tape.backward(y);
  const double t = std::tanh(1.5);
  CHECK(x.grad()(0, 0) == Catch::Approx(std::exp(t) * (1 - t * t) * 3.0).epsilon(1e-14));
}

TEST_CASE("shape mismatches name both shapes") {
  Tensor a(Matrix::Zero(2, 3)), b(Matrix::Zero(4, 5));
  try {
    matmul(a, b);
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2x3)") != std::string::npos);
    CHECK(msg.find("(4x5)") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), InvalidArgument);
  CHECK_THROWS_AS(sqdist(a, b), InvalidArgument);
  CHECK_THROWS_AS(frobenius_dot(a, b), InvalidArgument);
}

TEST_CASE("batchnorm in eval mode is a batch-independent affine map") {
  std::mt19937_64 rng(5);
  BatchNormState st(3);
  Tensor gamma(random_matrix(rng, 1, 3)), beta(random_matrix(rng, 1, 3));
  Tensor x(random_matrix(rng, 6, 3));
  // Update running stats a few times.
  for (int i = 0; i < 3; ++i) batchnorm(Tensor(random_matrix(rng, 5, 3)), gamma, beta, st, true);
  Matrix full = batchnorm_eval(x, gamma, beta, st).value();
  for (int r = 0; r < 6; ++r) {
    Matrix single = batchnorm_eval(slice_rows(x, r, 1), gamma, beta, st).value();
    CHECK((single.row(0) - full.row(r)).cwiseAbs().maxCoeff() == 0.0);
  }
  // Training mode normalizes with the batch: column means become beta.
  BatchNormState fresh(3);
  Matrix tr = batchnorm(x, gamma, beta, fresh, true).value();
  CHECK((tr.colwise().mean() - beta.value()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("no tape means no recording") {
  Tensor x(Matrix::Ones(2, 2), true);
  Tensor y = exp(x);
  CHECK_FALSE(y.requires_grad());
  Tape tape;
  TapeScope s(tape);
  {
    NoGradScope ng;
    exp(x);
  }
  CHECK(tape.size() == 0);
  exp(x);
  CHECK(tape.size() == 1);
}
