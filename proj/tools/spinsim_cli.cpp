// Command-line front end for the spinsim shared library. Everything numerical
// happens behind the C API; this file only shuttles JSON/CSV in and out.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spinsim.h"

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

struct CliError {
  int code;
  std::string message;
};

[[noreturn]] void die(int code, const std::string& message) { throw CliError{code, message}; }

[[noreturn]] void die_api(spinsim_status status) {
  throw CliError{static_cast<int>(status), spinsim_last_error()};
}

void check(spinsim_status status) {
  if (status != SPINSIM_OK) die_api(status);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) die(2, "cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) die(2, "cannot write " + path);
  out << content;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    die(2, what + ": " + e.what());
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

using ModelHandle = std::unique_ptr<spinsim_model, decltype(&spinsim_model_free)>;

ModelHandle load_model(const json& config) {
  std::string model_text;
  if (config.contains("model")) {
    model_text = config.at("model").dump();
  } else if (config.contains("model_file")) {
    model_text = read_file(config.at("model_file").get<std::string>());
  } else {
    die(2, "config must provide \"model\" or \"model_file\"");
  }
  spinsim_model* raw = nullptr;
  check(spinsim_model_from_json(model_text.c_str(), &raw));
  return {raw, &spinsim_model_free};
}

std::vector<double> grid_hz_from_config(const json& config) {
  if (!config.contains("grid")) die(2, "config must provide \"grid\"");
  const json& g = config.at("grid");
  std::vector<double> grid;
  if (g.is_array()) {
    for (const auto& v : g) grid.push_back(v.get<double>());
  } else if (g.is_object()) {
    const double start = g.at("start_hz").get<double>();
    const double stop = g.at("stop_hz").get<double>();
    const auto points = g.at("points").get<size_t>();
    if (points < 2) die(2, "grid points must be >= 2");
    for (size_t k = 0; k < points; ++k)
      grid.push_back(start + (stop - start) * static_cast<double>(k) /
                                 static_cast<double>(points - 1));
  } else {
    die(2, "grid must be an array of Hz or {start_hz, stop_hz, points}");
  }
  return grid;
}

std::vector<double> angles_from_config(const json& config) {
  if (!config.contains("angles")) die(2, "config must provide \"angles\"");
  const json& a = config.at("angles");
  std::vector<double> angles;
  if (a.is_array()) {
    for (const auto& v : a) angles.push_back(v.get<double>());
  } else if (a.is_object()) {
    const auto count = a.at("count").get<size_t>();
    if (count < 1) die(2, "angle count must be >= 1");
    for (size_t k = 0; k < count; ++k)
      angles.push_back(kPi * static_cast<double>(k) / static_cast<double>(count));
  } else {
    die(2, "angles must be an array of radians or {count}");
  }
  return angles;
}

spinsim_method method_from_config(const json& config) {
  const std::string name = config.value("method", std::string("full"));
  if (name == "full") return SPINSIM_METHOD_FULL;
  if (name == "rwa") return SPINSIM_METHOD_RWA;
  if (name == "analytic" || name == "analytic_single_mode") return SPINSIM_METHOD_ANALYTIC;
  die(2, "unknown method \"" + name + "\"");
}

struct CommonOptions {
  std::string config_path;
  std::string out_path;
  std::string format;  // "csv" or "json"
  std::uint64_t seed = 0;
  bool db = false;
};

void add_common(CLI::App* cmd, CommonOptions& opt, const char* default_format) {
  cmd->add_option("--config", opt.config_path, "configuration JSON file")->required();
  cmd->add_option("--out", opt.out_path, "output file (default: stdout)");
  opt.format = default_format;
  cmd->add_option("--format", opt.format, "output format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--seed", opt.seed, "random seed for synthetic data");
  cmd->add_flag("--db", opt.db, "emit PSDs in dB relative to shot noise");
}

double maybe_db(double sn, bool db) { return db ? 10.0 * std::log10(sn) : sn; }

// -------------------------------------------------------------------------
// simulate / sweep

struct TraceBlock {
  std::string kind;                // trace, min_envelope, formula_envelope
  std::optional<double> angle;     // fixed detection angle for plain traces
  std::vector<double> angle_per_bin;  // per-frequency angle (envelope minimizer)
  std::vector<double> psd;
};

std::string render_blocks_csv(const std::vector<double>& grid_hz,
                              const std::vector<TraceBlock>& blocks, bool db, bool with_kind) {
  std::ostringstream os;
  const char* value_col = db ? "psd_db" : "psd_sn";
  if (with_kind)
    os << "kind,freq_hz," << value_col << ",angle_rad\n";
  else
    os << "freq_hz," << value_col << ",angle_rad\n";
  for (const auto& block : blocks) {
    for (size_t k = 0; k < grid_hz.size(); ++k) {
      if (with_kind) os << block.kind << ",";
      os << fmt(grid_hz[k]) << "," << fmt(maybe_db(block.psd[k], db)) << ",";
      if (block.angle)
        os << fmt(*block.angle);
      else if (!block.angle_per_bin.empty())
        os << fmt(block.angle_per_bin[k]);
      os << "\n";
    }
  }
  return os.str();
}

json render_blocks_json(const std::vector<double>& grid_hz,
                        const std::vector<TraceBlock>& blocks, bool db) {
  const char* value_key = db ? "psd_db" : "psd_sn";
  json out;
  out["freq_hz"] = grid_hz;
  json entries = json::array();
  for (const auto& block : blocks) {
    json e;
    e["kind"] = block.kind;
    if (block.angle) e["angle_rad"] = *block.angle;
    if (!block.angle_per_bin.empty()) e["angle_rad"] = block.angle_per_bin;
    json values = json::array();
    for (double v : block.psd) values.push_back(maybe_db(v, db));
    e[value_key] = values;
    entries.push_back(std::move(e));
  }
  out["traces"] = std::move(entries);
  return out;
}

int run_simulate(const CommonOptions& opt, bool sweep) {
  const json config = parse_json(read_file(opt.config_path), opt.config_path);
  const ModelHandle model = load_model(config);
  const std::vector<double> grid_hz = grid_hz_from_config(config);
  const std::vector<double> angles = angles_from_config(config);
  const spinsim_method method = sweep ? SPINSIM_METHOD_FULL : method_from_config(config);
  const int include_ext = config.value("include_extraneous", false) ? 1 : 0;
  const size_t n = grid_hz.size();

  std::vector<TraceBlock> blocks;
  std::vector<double> buffer(n);
  for (double phi : angles) {
    check(spinsim_psd(model.get(), grid_hz.data(), n, phi, method, include_ext, buffer.data()));
    TraceBlock block;
    block.kind = "trace";
    block.angle = phi;
    block.psd = buffer;
    blocks.push_back(std::move(block));
  }

  if (sweep) {
    std::vector<double> phi_min(n);
    check(spinsim_psd_min(model.get(), grid_hz.data(), n, include_ext, buffer.data(),
                          phi_min.data()));
    TraceBlock numeric;
    numeric.kind = "min_envelope";
    numeric.angle_per_bin = phi_min;
    numeric.psd = buffer;
    blocks.push_back(std::move(numeric));

    check(spinsim_envelope(model.get(), grid_hz.data(), n, buffer.data()));
    TraceBlock formula;
    formula.kind = "formula_envelope";
    formula.psd = buffer;
    blocks.push_back(std::move(formula));
  }

  if (opt.format == "csv")
    write_output(opt.out_path, render_blocks_csv(grid_hz, blocks, opt.db, sweep));
  else
    write_output(opt.out_path, render_blocks_json(grid_hz, blocks, opt.db).dump(2) + "\n");
  return 0;
}

// -------------------------------------------------------------------------
// synth

std::string dataset_json_to_csv(const json& dataset) {
  std::ostringstream os;
  os << "freq_hz,psd_sn,angle_rad,n_avg\n";
  for (const auto& trace : dataset.at("traces")) {
    const auto& freq = trace.at("freq_hz");
    const auto& psd = trace.at("psd_sn");
    const double angle = trace.at("angle_rad").get<double>();
    const double n_avg = trace.at("n_avg").get<double>();
    for (size_t k = 0; k < freq.size(); ++k) {
      os << fmt(freq[k].get<double>()) << "," << fmt(psd[k].get<double>()) << ","
         << fmt(angle) << "," << fmt(n_avg) << "\n";
    }
  }
  return os.str();
}

int run_synth(const CommonOptions& opt) {
  json config = parse_json(read_file(opt.config_path), opt.config_path);
  if (config.contains("model_file")) {
    config["model"] = parse_json(read_file(config.at("model_file").get<std::string>()),
                                 "model_file");
    config.erase("model_file");
  }
  char* result = nullptr;
  check(spinsim_synthesize(config.dump().c_str(), opt.seed, &result));
  const json dataset = json::parse(result);
  spinsim_string_free(result);
  if (opt.format == "csv")
    write_output(opt.out_path, dataset_json_to_csv(dataset));
  else
    write_output(opt.out_path, dataset.dump(2) + "\n");
  return 0;
}

// -------------------------------------------------------------------------
// fit

json csv_to_traces(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) die(2, "empty dataset CSV");
  // expected header: freq_hz,psd_sn,angle_rad,n_avg
  json traces = json::array();
  json current;
  double prev_freq = 0.0;
  bool have_current = false;
  auto flush = [&] {
    if (have_current) traces.push_back(current);
    have_current = false;
  };
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    double freq, psd, angle, n_avg;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &freq, &psd, &angle, &n_avg) != 4)
      die(2, "malformed dataset CSV at line " + std::to_string(line_no));
    const bool new_trace = !have_current || freq <= prev_freq ||
                           angle != current.at("angle_rad").get<double>() ||
                           n_avg != current.at("n_avg").get<double>();
    if (new_trace) {
      flush();
      current = {{"freq_hz", json::array()},
                 {"psd_sn", json::array()},
                 {"angle_rad", angle},
                 {"n_avg", n_avg}};
      have_current = true;
    }
    current["freq_hz"].push_back(freq);
    current["psd_sn"].push_back(psd);
    prev_freq = freq;
  }
  flush();
  if (traces.empty()) die(2, "dataset CSV holds no traces");
  return traces;
}

int run_fit(const CommonOptions& opt) {
  json config = parse_json(read_file(opt.config_path), opt.config_path);
  if (config.contains("initial_file")) {
    config["initial"] = parse_json(read_file(config.at("initial_file").get<std::string>()),
                                   "initial_file");
    config.erase("initial_file");
  }
  if (config.contains("data_csv")) {
    config["traces"] = csv_to_traces(read_file(config.at("data_csv").get<std::string>()));
    config.erase("data_csv");
  }
  char* result = nullptr;
  const spinsim_status status = spinsim_fit(config.dump().c_str(), &result);
  if (result == nullptr) die_api(status);
  write_output(opt.out_path, std::string(result) + "\n");
  spinsim_string_free(result);
  return static_cast<int>(status);  // 0, or 4 when not converged (result still written)
}

// -------------------------------------------------------------------------
// bip

int run_bip(const CommonOptions& opt) {
  const json config = parse_json(read_file(opt.config_path), opt.config_path);
  double value = 0.0;
  check(spinsim_bip(config.at("eta").get<double>(), config.value("s_ext_sn", 0.0),
                    config.value("zeta", 0.0), config.at("c_q").get<double>(), &value));
  if (opt.format == "csv") {
    write_output(opt.out_path, "bip_hbar_over_2\n" + fmt(value) + "\n");
  } else {
    const json out = {{"bip_hbar_over_2", value}};
    write_output(opt.out_path, out.dump(2) + "\n");
  }
  return 0;
}

// -------------------------------------------------------------------------
// design-tophat

int run_design(const CommonOptions& opt) {
  const json config = parse_json(read_file(opt.config_path), opt.config_path);
  char* result = nullptr;
  check(spinsim_tophat_design(config.dump().c_str(), &result));
  const json design = json::parse(result);
  spinsim_string_free(result);
  if (opt.format == "json") {
    write_output(opt.out_path, design.dump(2) + "\n");
    return 0;
  }
  std::ostringstream os;
  for (const char* key : {"f2_mm", "L1_mm", "L2_mm", "L3_mm", "residual_max"})
    os << "# " << key << "=" << fmt(design.at(key).get<double>()) << "\n";
  os << "# inverted=" << (design.at("inverted").get<bool>() ? "true" : "false") << "\n";
  os << "element,z_mm,height_mm,slope_rad\n";
  for (const auto& row : design.at("ray_table")) {
    os << row.at("element").get<std::string>() << "," << fmt(row.at("z_mm").get<double>())
       << "," << fmt(row.at("height_mm").get<double>()) << ","
       << fmt(row.at("slope_rad").get<double>()) << "\n";
  }
  write_output(opt.out_path, os.str());
  return 0;
}

// -------------------------------------------------------------------------
// ensemble

int run_ensemble(const CommonOptions& opt) {
  const json config = parse_json(read_file(opt.config_path), opt.config_path);
  spinsim_model* raw = nullptr;
  check(spinsim_model_from_ensemble_json(config.dump().c_str(), &raw));
  const ModelHandle model(raw, &spinsim_model_free);
  char* text = nullptr;
  check(spinsim_model_to_json(model.get(), &text));
  const json model_json = json::parse(text);
  spinsim_string_free(text);
  if (opt.format == "json") {
    write_output(opt.out_path, model_json.dump(2) + "\n");
    return 0;
  }
  std::ostringstream os;
  os << "# eta=" << fmt(model_json.at("eta").get<double>()) << "\n";
  os << "omega_hz,gamma0_hz,gamma_meas_hz,zeta,n_th\n";
  for (const auto& m : model_json.at("modes")) {
    os << fmt(m.at("omega_hz").get<double>()) << "," << fmt(m.at("gamma0_hz").get<double>())
       << "," << fmt(m.at("gamma_meas_hz").get<double>()) << ","
       << fmt(m.at("zeta").get<double>()) << "," << fmt(m.at("n_th").get<double>()) << "\n";
  }
  write_output(opt.out_path, os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spinsim: homodyne spectra, squeezing envelopes, and fits for "
               "continuously measured spin oscillators"};
  app.require_subcommand(1);

  CommonOptions simulate_opt, sweep_opt, fit_opt, synth_opt, bip_opt, design_opt, ensemble_opt;
  CLI::App* simulate = app.add_subcommand("simulate", "homodyne PSDs at chosen quadratures");
  add_common(simulate, simulate_opt, "csv");
  CLI::App* sweep = app.add_subcommand(
      "sweep", "quadrature sweep with numeric and closed-form squeezing envelopes");
  add_common(sweep, sweep_opt, "csv");
  CLI::App* fit = app.add_subcommand("fit", "global fit of multi-quadrature spectra");
  add_common(fit, fit_opt, "json");
  CLI::App* synth = app.add_subcommand("synth", "seeded synthetic dataset");
  add_common(synth, synth_opt, "csv");
  CLI::App* bip = app.add_subcommand("bip", "backaction-imprecision product report");
  add_common(bip, bip_opt, "json");
  CLI::App* design = app.add_subcommand("design-tophat", "collimated tophat beam design");
  add_common(design, design_opt, "json");
  CLI::App* ensemble = app.add_subcommand("ensemble", "multimode model from level populations");
  add_common(ensemble, ensemble_opt, "json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return run_simulate(simulate_opt, false);
    if (sweep->parsed()) return run_simulate(sweep_opt, true);
    if (fit->parsed()) return run_fit(fit_opt);
    if (synth->parsed()) return run_synth(synth_opt);
    if (bip->parsed()) return run_bip(bip_opt);
    if (design->parsed()) return run_design(design_opt);
    if (ensemble->parsed()) return run_ensemble(ensemble_opt);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
