#include "dcpt/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace dcpt {

namespace {

double scalar_of(const Tensor<double>& y) {
  if (y.numel() != 1) throw TapeError("grad_check: function output has shape " + shape_str(y.shape()));
  return y.item();
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

double grad_check(const ScalarFn& f, const Tensor<double>& x, double h) {
  auto probe = Tensor<double>::from_data(x.shape(), {x.data().begin(), x.data().end()}, true);
  auto y = f(probe);
  scalar_of(y);
  backward(y);
  std::vector<double> analytic(probe.numel(), 0.0);
  if (probe.has_grad()) std::copy(probe.grad().begin(), probe.grad().end(), analytic.begin());

  double worst = 0.0;
  std::vector<double> buf(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double saved = buf[i];
    buf[i] = saved + h;
    const double fp = scalar_of(f(Tensor<double>::from_data(x.shape(), buf)));
    buf[i] = saved - h;
    const double fm = scalar_of(f(Tensor<double>::from_data(x.shape(), buf)));
    buf[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2 * h)));
  }
  return worst;
}

double grad_check_parameters(const std::function<Tensor<double>()>& loss,
                             std::vector<Tensor<double>> params, std::size_t coordinates,
                             RandomSource& rng, double h) {
  for (auto& p : params) p.zero_grad();
  auto y = loss();
  scalar_of(y);
  backward(y);

  std::size_t total = 0;
  for (const auto& p : params) total += p.numel();
  if (total == 0) return 0.0;

  double worst = 0.0;
  for (std::size_t c = 0; c < coordinates; ++c) {
    std::size_t flat = rng.below(total);
    std::size_t which = 0;
    while (flat >= params[which].numel()) flat -= params[which++].numel();
    auto& p = params[which];
    const double analytic = p.has_grad() ? p.grad()[flat] : 0.0;
    auto data = p.mutable_data();
    const double saved = data[flat];
    data[flat] = saved + h;
    const double fp = scalar_of(loss());
    data[flat] = saved - h;
    const double fm = scalar_of(loss());
    data[flat] = saved;
    worst = std::max(worst, relative_error(analytic, (fp - fm) / (2 * h)));
  }
  return worst;
}

}  // namespace dcpt
