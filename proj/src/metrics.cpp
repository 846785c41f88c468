#include "coss/metrics.hpp"

#include <fmt/format.h>

#include "coss/error.hpp"

namespace coss {

const char* to_string(Metric m) { return m == Metric::accuracy ? "accuracy" : "macro_f1"; }

Metric parse_metric(const std::string& name) {
  if (name == "accuracy") return Metric::accuracy;
  if (name == "macro_f1") return Metric::macro_f1;
  throw ConfigError(fmt::format("unknown metric '{}'", name));
}

Metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted, std::size_t num_classes) {
  if (truth.size() != predicted.size()) throw InputError("metrics: truth and predictions differ in length");
  Metrics m;
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || std::size_t(truth[i]) >= num_classes || predicted[i] < 0 ||
        std::size_t(predicted[i]) >= num_classes) {
      throw InputError(fmt::format("metrics: class index outside [0,{})", num_classes));
    }
    ++m.confusion[truth[i]][predicted[i]];
    if (truth[i] == predicted[i]) ++correct;
  }
  m.accuracy = truth.empty() ? 0.0 : double(correct) / double(truth.size());
  m.per_class_f1.assign(num_classes, 0.0);
  double f1_sum = 0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t support = 0, predicted_c = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      support += m.confusion[c][k];
      predicted_c += m.confusion[k][c];
    }
    const std::size_t tp = m.confusion[c][c];
    if (support + predicted_c == 0) continue;
    const double f1 = 2.0 * double(tp) / double(support + predicted_c);
    m.per_class_f1[c] = f1;
    f1_sum += f1;
    ++present;
  }
  m.macro_f1 = present == 0 ? 0.0 : f1_sum / double(present);
  return m;
}

} // namespace coss
