#include "echmm/market_data.hpp"

#include "echmm/csv.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace echmm {

AlignedPanel::AlignedPanel(std::vector<std::string> stock_ids, std::vector<std::string> dates,
                           std::vector<PriceTable> prices, std::vector<std::vector<bool>> filled)
    : stock_ids_(std::move(stock_ids)),
      dates_(std::move(dates)),
      prices_(std::move(prices)),
      filled_(std::move(filled)) {
  if (prices_.size() != stock_ids_.size())
    throw ShapeError("panel has " + std::to_string(prices_.size()) + " price tables for " +
                     std::to_string(stock_ids_.size()) + " stocks");
  for (const auto& p : prices_)
    if (p.rows() != static_cast<Eigen::Index>(dates_.size()))
      throw ShapeError("price table length does not match the calendar");
  if (filled_.empty()) filled_.assign(stock_ids_.size(), std::vector<bool>(dates_.size(), false));
  for (std::size_t i = 1; i < dates_.size(); ++i)
    if (!(dates_[i - 1] < dates_[i])) throw InputError("panel dates must be strictly increasing");
}

int AlignedPanel::stock_index(const std::string& stock_id) const {
  const auto it = std::find(stock_ids_.begin(), stock_ids_.end(), stock_id);
  if (it == stock_ids_.end()) throw NotFoundError("stock '" + stock_id + "'");
  return static_cast<int>(it - stock_ids_.begin());
}

bool AlignedPanel::filled(int day, int stock) const {
  return filled_[static_cast<std::size_t>(stock)][static_cast<std::size_t>(day)];
}

PriceObservation AlignedPanel::at(int day, int stock) const {
  const auto& p = prices(stock);
  PriceObservation obs;
  obs.stock_id = stock_ids_[static_cast<std::size_t>(stock)];
  obs.day_index = day;
  obs.open = p(day, 0);
  obs.high = p(day, 1);
  obs.low = p(day, 2);
  obs.close = p(day, 3);
  if (day > 0) obs.p_change = (p(day, 3) - p(day - 1, 3)) / p(day - 1, 3);
  return obs;
}

AlignedPanel AlignedPanel::slice(int begin, int end) const {
  if (begin < 0 || end > num_days() || begin >= end)
    throw RangeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside panel of " + std::to_string(num_days()) + " days");
  std::vector<std::string> dates(dates_.begin() + begin, dates_.begin() + end);
  std::vector<PriceTable> prices;
  std::vector<std::vector<bool>> filled;
  for (std::size_t s = 0; s < prices_.size(); ++s) {
    prices.emplace_back(prices_[s].middleRows(begin, end - begin));
    filled.emplace_back(filled_[s].begin() + begin, filled_[s].begin() + end);
  }
  return AlignedPanel(stock_ids_, std::move(dates), std::move(prices), std::move(filled));
}

bool AlignedPanel::operator==(const AlignedPanel& other) const {
  if (stock_ids_ != other.stock_ids_ || dates_ != other.dates_) return false;
  for (std::size_t s = 0; s < prices_.size(); ++s)
    if (prices_[s] != other.prices_[s]) return false;
  return true;
}

namespace {

struct Row {
  std::size_t line = 0;
  Eigen::Vector4d ohlc;
};

}  // namespace

AlignedPanel load_price_csv(const std::string& path, MissingDayPolicy policy) {
  csv::LineReader reader(path);
  if (!reader.ok()) throw InputError("cannot open price file '" + path + "'");
  std::string line;
  if (!reader.next(line)) throw ParseError(path, 1, "missing header");
  const auto header = csv::split(line);
  const std::vector<std::string_view> expected{"stock_id", "date", "open", "high", "low", "close"};
  if (header.size() < expected.size() ||
      !std::equal(expected.begin(), expected.end(), header.begin()))
    throw ParseError(path, reader.line_no(),
                     "header must start with stock_id,date,open,high,low,close");
  const bool has_pchange = header.size() == 7 && header[6] == "p_change";
  if (header.size() != expected.size() && !has_pchange)
    throw ParseError(path, reader.line_no(), "unexpected extra columns in header");

  std::map<std::string, std::map<std::string, Row>> by_stock;
  std::set<std::string> calendar;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size())
      throw ParseError(path, reader.line_no(),
                       "expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(f.size()));
    if (f[0].empty()) throw ParseError(path, reader.line_no(), "empty stock_id");
    if (!csv::is_iso_date(f[1]))
      throw ParseError(path, reader.line_no(), "date '" + std::string(f[1]) + "' is not YYYY-MM-DD");
    Row row;
    row.line = reader.line_no();
    for (int c = 0; c < kPriceComponents; ++c) {
      const auto v = csv::parse_double(f[static_cast<std::size_t>(2 + c)]);
      if (!v || !std::isfinite(*v))
        throw ParseError(path, reader.line_no(),
                         "non-numeric price '" + std::string(f[static_cast<std::size_t>(2 + c)]) + "'");
      row.ohlc(c) = *v;
    }
    const double open = row.ohlc(0), high = row.ohlc(1), low = row.ohlc(2), close = row.ohlc(3);
    if (open <= 0 || high <= 0 || low <= 0 || close <= 0)
      throw ParseError(path, reader.line_no(), "prices must be positive");
    if (high < std::max(open, close) || low > std::min(open, close))
      throw ParseError(path, reader.line_no(), "high/low inconsistent with open/close");
    std::string stock(f[0]), date(f[1]);
    auto [it, inserted] = by_stock[stock].emplace(date, row);
    if (!inserted)
      throw ParseError(path, reader.line_no(), "duplicate row for " + stock + " on " + date);
    calendar.insert(date);
  }
  if (by_stock.empty()) throw InsufficientDataError("price file '" + path + "' has no rows");

  std::vector<std::string> dates(calendar.begin(), calendar.end());
  std::vector<std::string> ids;
  std::vector<PriceTable> prices;
  std::vector<std::vector<bool>> filled;
  for (const auto& [stock, rows] : by_stock) {
    if (rows.size() < 2)
      throw InsufficientDataError("stock '" + stock + "' has fewer than 2 days");
    PriceTable table(static_cast<Eigen::Index>(dates.size()), kPriceComponents);
    std::vector<bool> fill(dates.size(), false);
    for (std::size_t d = 0; d < dates.size(); ++d) {
      const auto it = rows.find(dates[d]);
      if (it != rows.end()) {
        table.row(static_cast<Eigen::Index>(d)) = it->second.ohlc.transpose();
        continue;
      }
      if (policy == MissingDayPolicy::kReject)
        throw InsufficientDataError("stock '" + stock + "' has a gap on " + dates[d]);
      if (d == 0)
        throw InsufficientDataError("stock '" + stock + "' has no prior close to forward-fill " +
                                    dates[d]);
      table.row(static_cast<Eigen::Index>(d)).setConstant(table(static_cast<Eigen::Index>(d - 1), 3));
      fill[d] = true;
    }
    ids.push_back(stock);
    prices.push_back(std::move(table));
    filled.push_back(std::move(fill));
  }
  return AlignedPanel(std::move(ids), std::move(dates), std::move(prices), std::move(filled));
}

void write_price_csv(const AlignedPanel& panel, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "stock_id,date,open,high,low,close,p_change\n";
  for (int s = 0; s < panel.num_stocks(); ++s) {
    const auto& p = panel.prices(s);
    for (int d = 0; d < panel.num_days(); ++d) {
      out << panel.stock_ids()[static_cast<std::size_t>(s)] << ',' << panel.dates()[static_cast<std::size_t>(d)];
      for (int c = 0; c < kPriceComponents; ++c) out << ',' << csv::format_double(p(d, c));
      out << ',';
      if (d > 0) out << csv::format_double((p(d, 3) - p(d - 1, 3)) / p(d - 1, 3));
      out << '\n';
    }
  }
}

Eigen::VectorXd compute_pchange_curve(const AlignedPanel& panel, int stock) {
  const auto& p = panel.prices(stock);
  const Eigen::Index n = p.rows();
  if (n < 2) return Eigen::VectorXd();
  return (p.col(3).tail(n - 1) - p.col(3).head(n - 1)).cwiseQuotient(p.col(3).head(n - 1));
}

Eigen::VectorXd compute_pchange_curve(const AlignedPanel& panel, const std::string& stock_id) {
  return compute_pchange_curve(panel, panel.stock_index(stock_id));
}

bool direction_up(const AlignedPanel& panel, int day, int stock) {
  return panel.close(day + 1, stock) >= panel.close(day, stock);
}

}  // namespace echmm
