#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace coss {

enum class Metric { accuracy, macro_f1 };

const char* to_string(Metric m);
Metric parse_metric(const std::string& name);

struct Metrics {
  double accuracy = 0;
  /// Mean F1 over classes that occur in the truth or the predictions.
  double macro_f1 = 0;
  std::vector<double> per_class_f1;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  double loss = 0;

  double get(Metric m) const { return m == Metric::accuracy ? accuracy : macro_f1; }
};

Metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted, std::size_t num_classes);

} // namespace coss
