#include "avwm/gradcheck.hpp"

#include <cmath>
#include <map>

namespace avwm::ndgrad {

GradCheckResult finite_difference_check(ParamStore& params,
                                        const std::function<Tensor()>& loss_fn,
                                        double step) {
  params.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);

  std::map<std::string, std::vector<double>> analytic;
  for (const auto& [name, e] : params.entries()) analytic[name] = e.tensor.grad();

  GradCheckResult result;
  for (auto& [name, e] : params.mutable_entries()) {
    auto& w = e.tensor.mutable_values();
    const auto& ga = analytic[name];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double w0 = w[i];
      w[i] = w0 + step;
      const double fp = loss_fn().item();
      w[i] = w0 - step;
      const double fm = loss_fn().item();
      w[i] = w0;
      const double gn = (fp - fm) / (2.0 * step);
      const double err =
          std::abs(ga[i] - gn) / std::max({1.0, std::abs(ga[i]), std::abs(gn)});
      ++result.checked;
      if (err > result.max_rel_err) {
        result.max_rel_err = err;
        result.worst_param = name;
        result.worst_index = static_cast<int64_t>(i);
      }
    }
  }
  return result;
}

}  // namespace avwm::ndgrad
