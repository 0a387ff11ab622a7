#include <fstream>
#include <sstream>

#include "lab/errors.hpp"
#include "lab/harness.hpp"

namespace lab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

}  // namespace

std::size_t SweepGrid::cells() const {
  std::size_t n = 1;
  for (const auto& [k, values] : axes) n *= values.size();
  return n;
}

std::vector<std::pair<std::string, std::string>> SweepGrid::cell(std::size_t index) const {
  if (index >= cells()) throw ConfigError("sweep: cell index out of range");
  std::vector<std::pair<std::string, std::string>> out(axes.size());
  for (std::size_t a = axes.size(); a-- > 0;) {
    const auto& values = axes[a].second;
    out[a] = {axes[a].first, values[index % values.size()]};
    index /= values.size();
  }
  return out;
}

SweepGrid parse_grid(std::istream& in) {
  SweepGrid grid;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("grid line " + std::to_string(lineno) + ": expected key = v1, v2, ...");
    const std::string key = trim(line.substr(0, eq));
    std::vector<std::string> values;
    std::istringstream parts(line.substr(eq + 1));
    std::string part;
    while (std::getline(parts, part, ',')) {
      part = trim(part);
      if (part.empty()) throw ConfigError("grid line " + std::to_string(lineno) + ": empty value");
      values.push_back(part);
    }
    if (values.empty()) throw ConfigError("grid line " + std::to_string(lineno) + ": no values");
    for (const auto& [k, v] : grid.axes)
      if (k == key) throw ConfigError("grid line " + std::to_string(lineno) + ": duplicate axis '" + key + "'");
    grid.axes.emplace_back(key, std::move(values));
  }
  if (grid.axes.empty()) throw ConfigError("grid: no axes");
  return grid;
}

SweepGrid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("grid: cannot open " + path.string());
  return parse_grid(in);
}

SweepGrid default_grid(UniformityVariant v) {
  const auto d = uniformity_defaults(v);
  std::istringstream text("objective = " + std::string(v == UniformityVariant::Gauss ? "lovt_uni_gauss" : "lovt_uni_xent") +
                          "\ntau_prime = " + join(d.sweep_tau_primes) + "\neta = " + join(d.sweep_etas) + "\n");
  return parse_grid(text);
}

std::vector<SweepCell> sweep(const ExperimentConfig& base, const SweepGrid& grid) {
  std::vector<SweepCell> cells;
  const std::size_t n = grid.cells();
  cells.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SweepCell cell;
    cell.index = i;
    cell.config = base;
    try {
      cell.config.seed = base.seed + i;
      for (const auto& [k, v] : grid.cell(i)) set_config_value(cell.config, k, v);
      cell.result = train(cell.config);
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

std::string sweep_csv(const std::vector<SweepCell>& cells) {
  if (cells.empty()) throw ConfigError("sweep: no cells");
  std::string out = metric_csv_header();
  for (const auto& [k, v] : config_echo(cells.front().config)) out += ",cfg_" + k;
  out += "\n";
  for (const auto& c : cells) {
    out += c.ok ? metric_csv_row(c.result.final_record) : empty_metric_csv_row();
    for (const auto& [k, v] : config_echo(c.config)) out += "," + v;
    out += "\n";
  }
  return out;
}

void write_sweep(const std::filesystem::path& dir, const std::vector<SweepCell>& cells) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "sweep.csv", std::ios::binary);
    out << sweep_csv(cells);
  }
  std::string failures;
  for (const auto& c : cells) {
    if (c.ok) {
      write_run(dir / ("cell_" + std::to_string(c.index)), c.result);
    } else {
      failures += "cell " + std::to_string(c.index) + ": " + c.error + "\n";
    }
  }
  if (!failures.empty()) {
    std::ofstream out(dir / "sweep_failures.txt", std::ios::binary);
    out << failures;
  }
}

}  // namespace lab
