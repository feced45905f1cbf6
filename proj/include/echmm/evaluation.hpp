#pragma once

#include "echmm/predictor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace echmm {

/// "Up" is the positive class.
struct ConfusionMatrix {
  long tp = 0, tn = 0, fp = 0, fn = 0;

  long total() const { return tp + tn + fp + fn; }
  void add(Direction predicted, Direction actual);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

double accuracy(const ConfusionMatrix& cm);
double f1(const ConfusionMatrix& cm);
/// Returns 0 when any marginal in the denominator is zero.
double mcc(const ConfusionMatrix& cm);

struct Metrics {
  double acc = 0.0;
  std::optional<double> f1;  // empty when undefined
  double mcc = 0.0;
};

/// Empty metrics fields are not representable for accuracy, so an empty
/// matrix throws.
Metrics compute_metrics(const ConfusionMatrix& cm);

/// Inclusive day ranges; the test range must follow the training range.
struct Split {
  int train_first = 0;
  int train_last = 0;
  int test_first = 0;
  int test_last = 0;

  void validate(int num_days, int pool_length) const;
};

/// Training on the first `train_fraction` of the days, testing on the rest.
Split default_split(int num_days, double train_fraction = 5.0 / 6.0);

struct PredictionRecord {
  int stock = 0;
  int day = 0;  // predicted day
  Direction predicted = Direction::kUp;
  Direction actual = Direction::kUp;
  double log_likelihood = 0.0;
};

/// Everything the k-NN step needs: history plus the scored test pools.
struct BacktestTrace {
  std::vector<HistoryEntry> history;
  std::vector<PredictionRecord> tests;  // predicted is unset here
  int audited = 0;                      // predictions checked for look-ahead
};

struct BacktestReport {
  ConfusionMatrix pooled;
  std::vector<ConfusionMatrix> per_stock;
  std::vector<PredictionRecord> predictions;
  int history_size = 0;
  int audited = 0;
};

BacktestTrace run_backtest_trace(const AlignedPanel& panel, const EventGrid* events,
                                 const CorrelationGraph& graph, const Split& split,
                                 const PoolConfig& config, int threads = 1);

BacktestReport score_trace(const BacktestTrace& trace, int num_stocks, int k, bool pooled_history);

BacktestReport backtest(const AlignedPanel& panel, const EventGrid* events,
                        const CorrelationGraph& graph, const Split& split,
                        const PoolConfig& config, int threads = 1);

std::string report_to_json(const BacktestReport& report, const AlignedPanel& panel);

/// `stock_id,date,predicted,actual,log_likelihood`.
void write_predictions_csv(const std::vector<PredictionRecord>& predictions,
                           const AlignedPanel& panel, const std::string& path);

struct PredictionRow {
  std::string stock_id;
  std::string date;
  Direction predicted = Direction::kUp;
  Direction actual = Direction::kUp;
  double log_likelihood = 0.0;
};
std::vector<PredictionRow> load_predictions_csv(const std::string& path);
ConfusionMatrix confusion_from_rows(const std::vector<PredictionRow>& rows);

struct SweepRow {
  std::string parameter;
  std::string value;
  Metrics metrics;
};

/// Supported parameters: pool_length, k, fill_policy, history_length (train
/// days ending at the split's train_last).
std::vector<SweepRow> sweep(const AlignedPanel& panel, const EventGrid* events,
                            const CorrelationGraph& graph, const Split& split,
                            const PoolConfig& config, const std::string& parameter,
                            const std::vector<std::string>& values, std::uint64_t fill_seed = 0,
                            int threads = 1);

/// `parameter,value,acc,f1,mcc`; an undefined f1 is left empty.
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace echmm
