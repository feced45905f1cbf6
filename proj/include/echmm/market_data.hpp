#pragma once

#include "echmm/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace echmm {

/// Day x component table (open, high, low, close) for one stock.
using PriceTable = Eigen::Matrix<double, Eigen::Dynamic, kPriceComponents>;

struct PriceObservation {
  std::string stock_id;
  int day_index = 0;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  std::optional<double> p_change;  // absent on day 0

  Eigen::Vector4d components() const { return {open, high, low, close}; }
};

enum class MissingDayPolicy { kForwardFill, kReject };

/// Dense day x stock price table over a shared trading calendar. Immutable once
/// built.
class AlignedPanel {
 public:
  AlignedPanel() = default;
  AlignedPanel(std::vector<std::string> stock_ids, std::vector<std::string> dates,
               std::vector<PriceTable> prices, std::vector<std::vector<bool>> filled = {});

  int num_days() const { return static_cast<int>(dates_.size()); }
  int num_stocks() const { return static_cast<int>(stock_ids_.size()); }
  const std::vector<std::string>& stock_ids() const { return stock_ids_; }
  const std::vector<std::string>& dates() const { return dates_; }

  int stock_index(const std::string& stock_id) const;
  const PriceTable& prices(int stock) const { return prices_[static_cast<std::size_t>(stock)]; }
  double close(int day, int stock) const { return prices(stock)(day, 3); }
  bool filled(int day, int stock) const;
  PriceObservation at(int day, int stock) const;

  /// Days [begin, end) as a new panel with day indices rebased to 0.
  AlignedPanel slice(int begin, int end) const;

  bool operator==(const AlignedPanel& other) const;

 private:
  std::vector<std::string> stock_ids_;
  std::vector<std::string> dates_;
  std::vector<PriceTable> prices_;
  std::vector<std::vector<bool>> filled_;  // [stock][day]
};

AlignedPanel load_price_csv(const std::string& path,
                            MissingDayPolicy policy = MissingDayPolicy::kForwardFill);

/// Writes the panel with an extra p_change column (empty on day 0).
void write_price_csv(const AlignedPanel& panel, const std::string& path);

/// (close_t - close_{t-1}) / close_{t-1} for t = 1..T-1.
Eigen::VectorXd compute_pchange_curve(const AlignedPanel& panel, const std::string& stock_id);
Eigen::VectorXd compute_pchange_curve(const AlignedPanel& panel, int stock);

/// up iff close_{day+1} >= close_day.
bool direction_up(const AlignedPanel& panel, int day, int stock);

}  // namespace echmm
