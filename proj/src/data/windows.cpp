#include "factr/data/windows.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "factr/common/errors.hpp"
#include "factr/common/random.hpp"

namespace factr::data {
namespace {

void calendar_row(std::int64_t ts, std::int32_t* out) {
  using namespace std::chrono;
  std::int64_t days = ts / 86400;
  std::int64_t rem = ts % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const sys_days day_point{std::chrono::days{days}};
  const year_month_day ymd{day_point};
  const weekday wd{day_point};
  out[0] = static_cast<std::int32_t>(rem / 3600);
  out[1] = static_cast<std::int32_t>(wd.iso_encoding() - 1);
  out[2] = static_cast<std::int32_t>(static_cast<unsigned>(ymd.day()) - 1);
  out[3] = static_cast<std::int32_t>(static_cast<unsigned>(ymd.month()) - 1);
}

}  // namespace

std::optional<ad::IndexTensor> calendar_covariates(
    const std::optional<std::vector<std::int64_t>>& timestamps, std::size_t begin,
    std::size_t span) {
  if (!timestamps) return std::nullopt;
  if (begin + span > timestamps->size())
    throw ConfigError("calendar_covariates: span exceeds available timestamps");
  ad::IndexTensor out({span, kCalendarFeatures});
  for (std::size_t i = 0; i < span; ++i)
    calendar_row((*timestamps)[begin + i], out.data.data() + i * kCalendarFeatures);
  return out;
}

std::size_t window_count(std::size_t range_rows, std::size_t lookback, std::size_t horizon,
                         std::size_t stride) {
  if (range_rows < lookback + horizon) return 0;
  return (range_rows - lookback - horizon) / stride + 1;
}

template <typename Real>
WindowIterator<Real>::WindowIterator(const SeriesDataset& ds, RowRange range, WindowOptions opts)
    : ds_(&ds), range_(range), opts_(opts), rng_(opts.seed) {
  if (opts_.stride == 0 || opts_.batch == 0 || opts_.lookback == 0 || opts_.horizon == 0)
    throw ConfigError("window options must be positive");
  if (range.end > ds.rows() || range.begin > range.end)
    throw ConfigError("window range outside dataset");
  if (range.size() < opts_.lookback + opts_.horizon)
    throw ConfigError("range of " + std::to_string(range.size()) +
                      " rows is too short: need at least L + T = " +
                      std::to_string(opts_.lookback + opts_.horizon));
  const std::size_t n = data::window_count(range.size(), opts_.lookback, opts_.horizon, opts_.stride);
  starts_.resize(n);
  for (std::size_t i = 0; i < n; ++i) starts_[i] = range.begin + i * opts_.stride;
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);

  const std::size_t rows = ds.rows(), c = ds.channels();
  channel_major_.resize(rows * c);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < c; ++k) channel_major_[k * rows + r] = ds.at(r, k);
  if (opts_.calendar) calendar_ = calendar_covariates(ds.timestamps, 0, rows);
  start_epoch();
}

template <typename Real>
std::size_t WindowIterator<Real>::batch_count() const {
  return (starts_.size() + opts_.batch - 1) / opts_.batch;
}

template <typename Real>
void WindowIterator<Real>::start_epoch() {
  cursor_ = 0;
  if (opts_.shuffle) {
    std::iota(order_.begin(), order_.end(), 0);
    rnd::shuffle(order_.begin(), order_.end(), rng_);
  }
}

template <typename Real>
bool WindowIterator<Real>::next(WindowBatch<Real>& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t take = std::min(opts_.batch, order_.size() - cursor_);
  std::vector<std::size_t> ids(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
  cursor_ += take;
  out = gather(ids);
  return true;
}

template <typename Real>
WindowBatch<Real> WindowIterator<Real>::gather(const std::vector<std::size_t>& ids) const {
  const std::size_t b = ids.size(), c = ds_->channels(), rows = ds_->rows();
  const std::size_t l = opts_.lookback, t = opts_.horizon;
  WindowBatch<Real> out;
  out.inputs = ad::Tensor<Real>({b, c, l});
  out.targets = ad::Tensor<Real>({b, c, t});
  auto in = out.inputs.data();
  auto tg = out.targets.data();
  for (std::size_t i = 0; i < b; ++i) {
    if (ids[i] >= starts_.size())
      throw ConfigError("window id " + std::to_string(ids[i]) + " outside [0, " +
                        std::to_string(starts_.size()) + ")");
    const std::size_t s = starts_[ids[i]];
    out.starts.push_back(s);
    for (std::size_t k = 0; k < c; ++k) {
      const double* src = channel_major_.data() + k * rows + s;
      for (std::size_t j = 0; j < l; ++j) in[(i * c + k) * l + j] = static_cast<Real>(src[j]);
      for (std::size_t j = 0; j < t; ++j) tg[(i * c + k) * t + j] = static_cast<Real>(src[l + j]);
    }
  }
  if (calendar_) {
    const std::size_t kf = kCalendarFeatures;
    ad::IndexTensor dyn({b, 1, l, kf});
    for (std::size_t i = 0; i < b; ++i)
      std::copy_n(calendar_->data.data() + out.starts[i] * kf, l * kf, dyn.data.data() + i * l * kf);
    out.dyn = std::move(dyn);
  }
  return out;
}

template class WindowIterator<float>;
template class WindowIterator<double>;

}  // namespace factr::data
