#include "factr/data/dataset.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "factr/common/errors.hpp"

namespace factr::data {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '"')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '"')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      cells.push_back(trim(std::string_view(line).substr(start, i - start)));
      start = i + 1;
    }
  }
  return cells;
}

bool parse_int(std::string_view s, int& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

Frequency Frequency::parse(const std::string& text) {
  std::string t = trim(text);
  std::size_t pos = 0;
  while (pos < t.size() && std::isdigit(static_cast<unsigned char>(t[pos]))) ++pos;
  std::int64_t count = 1;
  if (pos > 0) count = std::stoll(t.substr(0, pos));
  std::string unit = t.substr(pos);
  for (auto& c : unit) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::int64_t unit_seconds = 0;
  if (unit == "s" || unit == "sec") unit_seconds = 1;
  else if (unit == "min" || unit == "t" || unit == "m") unit_seconds = 60;
  else if (unit == "h" || unit == "hour") unit_seconds = 3600;
  else if (unit == "d" || unit == "day") unit_seconds = 86400;
  else throw ConfigError("unrecognised frequency '" + text + "'");
  if (count <= 0) throw ConfigError("frequency must be positive: '" + text + "'");
  return Frequency{count * unit_seconds};
}

std::string Frequency::str() const {
  if (seconds % 86400 == 0) return std::to_string(seconds / 86400) + "d";
  if (seconds % 3600 == 0) return std::to_string(seconds / 3600) + "h";
  if (seconds % 60 == 0) return std::to_string(seconds / 60) + "min";
  return std::to_string(seconds) + "s";
}

std::int64_t parse_timestamp(const std::string& raw) {
  const std::string s = trim(raw);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  auto fail = [&]() -> std::int64_t { throw DataError("unparseable timestamp '" + raw + "'"); };
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return fail();
  if (!parse_int(std::string_view(s).substr(0, 4), y) ||
      !parse_int(std::string_view(s).substr(5, 2), mo) ||
      !parse_int(std::string_view(s).substr(8, 2), d))
    return fail();
  if (s.size() > 10) {
    if ((s[10] != ' ' && s[10] != 'T') || s.size() < 16 || s[13] != ':') return fail();
    if (!parse_int(std::string_view(s).substr(11, 2), h) ||
        !parse_int(std::string_view(s).substr(14, 2), mi))
      return fail();
    if (s.size() > 16) {
      if (s[16] != ':' || s.size() < 19 || !parse_int(std::string_view(s).substr(17, 2), sec))
        return fail();
    }
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return fail();
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + sec;
}

std::string format_timestamp(std::int64_t seconds) {
  using namespace std::chrono;
  std::int64_t days = seconds / 86400;
  std::int64_t rem = seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02lld:%02lld:%02lld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

SeriesDataset parse_csv_dataset(const std::string& text, Frequency frequency) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV: missing header row");
  auto header = split_csv_line(line);
  if (header.empty() || (header.size() == 1 && header[0].empty()))
    throw DataError("CSV header has no columns");
  const bool has_date = header[0] == "date";
  const std::size_t first = has_date ? 1 : 0;
  if (header.size() <= first) throw DataError("CSV has no channel columns");

  SeriesDataset ds;
  ds.frequency = frequency;
  ds.channel_names.assign(header.begin() + static_cast<std::ptrdiff_t>(first), header.end());
  const std::size_t channels = ds.channel_names.size();
  std::vector<double> values;
  std::vector<std::int64_t> stamps;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                      " cells, found " + std::to_string(cells.size()));
    if (has_date) {
      std::int64_t ts = 0;
      try {
        ts = parse_timestamp(cells[0]);
      } catch (const DataError& e) {
        throw DataError("row " + std::to_string(row) + ": " + e.what());
      }
      if (!stamps.empty()) {
        const std::int64_t step = ts - stamps.back();
        if (step <= 0)
          throw DataError("row " + std::to_string(row) + ": timestamps not strictly increasing");
        if (step != frequency.seconds)
          throw DataError("row " + std::to_string(row) + ": timestamp gap of " +
                          std::to_string(step) + "s does not match declared frequency " +
                          frequency.str());
      }
      stamps.push_back(ts);
    }
    for (std::size_t c = first; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      double v = 0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() ||
          !std::isfinite(v))
        throw DataError("row " + std::to_string(row) + ", column '" + header[c] +
                        "': missing or non-numeric value '" + cell + "'");
      values.push_back(v);
    }
    ++row;
  }
  if (row == 0) throw DataError("CSV contains a header but no data rows");
  ds.values = ad::Tensor<double>({row, channels}, std::move(values));
  if (has_date) ds.timestamps = std::move(stamps);
  return ds;
}

SeriesDataset load_csv_dataset(const std::string& path, Frequency frequency) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open dataset '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_csv_dataset(buf.str(), frequency);
}

std::string format_csv_dataset(const SeriesDataset& ds) {
  std::string out;
  if (ds.timestamps) out += "date,";
  for (std::size_t c = 0; c < ds.channels(); ++c) {
    if (c) out += ',';
    out += ds.channel_names[c];
  }
  out += '\n';
  char buf[64];
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    if (ds.timestamps) {
      out += format_timestamp((*ds.timestamps)[r]);
      out += ',';
    }
    for (std::size_t c = 0; c < ds.channels(); ++c) {
      if (c) out += ',';
      auto res = std::to_chars(buf, buf + sizeof buf, ds.at(r, c));
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

void write_csv_dataset(const SeriesDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path + "'");
  f << format_csv_dataset(ds);
}

}  // namespace factr::data
