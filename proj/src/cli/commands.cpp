#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "manifest.hpp"
#include "rolealign/clustering.hpp"
#include "rolealign/errors.hpp"
#include "rolealign/random.hpp"
#include "rolealign/synth.hpp"

namespace fs = std::filesystem;

namespace rolealign::cli {

namespace {

std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(trim(part));
  return out;
}

std::string frame_field(const Frame& f, const std::string& key) {
  if (key == "team") return f.context.team;
  if (key == "game") return f.context.game;
  if (key == "period") return f.context.period;
  if (key == "is_event") return f.is_event ? "1" : "0";
  if (key == "attack_direction") return to_string(f.attack_direction);
  throw InputError("unknown frame field '" + key + "'");
}

std::string normalize_value(const std::string& key, const std::string& v) {
  if (key == "is_event") {
    if (v == "1" || v == "true") return "1";
    if (v == "0" || v == "false") return "0";
    throw InputError("is_event filter value must be 0, 1, true or false, got '" + v + "'");
  }
  if (key == "attack_direction") return to_string(attack_direction_from_string(v));
  return v;
}

}  // namespace

FramePredicate parse_filter(const std::string& expr) {
  struct Clause {
    std::string key;
    bool negate = false;
    std::vector<std::string> values;
  };
  std::vector<Clause> clauses;
  for (const auto& raw : split(expr, ',')) {
    if (raw.empty()) continue;
    Clause c;
    std::size_t op = raw.find("!=");
    std::size_t vstart = op + 2;
    if (op != std::string::npos) {
      c.negate = true;
    } else if ((op = raw.find("==")) != std::string::npos) {
      vstart = op + 2;
    } else if ((op = raw.find('=')) != std::string::npos) {
      vstart = op + 1;
    } else {
      throw InputError("filter clause '" + raw + "' has no '=' or '!='");
    }
    c.key = trim(raw.substr(0, op));
    frame_field(Frame{}, c.key);  // rejects unknown keys
    for (const auto& v : split(raw.substr(vstart), '|')) c.values.push_back(normalize_value(c.key, v));
    clauses.push_back(std::move(c));
  }
  FramePredicate p;
  p.text = trim(expr).empty() ? "all frames" : "filter '" + trim(expr) + "'";
  p.test = [clauses](const Frame& f) {
    for (const auto& c : clauses) {
      const std::string v = frame_field(f, c.key);
      const bool hit = std::find(c.values.begin(), c.values.end(), v) != c.values.end();
      if (hit == c.negate) return false;
    }
    return true;
  };
  return p;
}

Comparison compare_methods(const Dataset& prepared, const DiscoveryConfig& cfg, const CompareOptions& opts) {
  if (!prepared.complete()) throw InputError("compare: every frame must carry every agent");
  if (static_cast<std::size_t>(cfg.k) != prepared.agent_count()) {
    throw InputError("compare: k must equal the agent count (" + std::to_string(prepared.agent_count()) + ")");
  }
  Comparison c;
  c.frames = prepared.frame_count();
  c.agents = prepared.agent_count();
  DiscoveryConfig soft_cfg = cfg;
  soft_cfg.init = InitMode::PlayerMeans;
  c.soft = discover_formation(prepared, soft_cfg);
  const Template init = player_role_init(prepared, cfg.eig_floor);
  c.hard = hard_assignment_em(prepared, init, opts.hard_max_iters, {cfg.eig_floor, cfg.threads});

  const FlatPoints flat = flatten(prepared);
  c.soft_log_likelihood = average_log_likelihood(flat.points, c.soft.formation, cfg.threads);
  c.hard_log_likelihood = average_log_likelihood(flat.points, c.hard.formation(), cfg.threads);

  const TemplateAlignment al = match_template(c.soft.formation, c.hard.roles);
  c.soft_roles = al.aligned;
  for (std::size_t j = 0; j < c.hard.roles.size(); ++j) {
    const Gaussian2D& s = c.soft_roles[j];
    const Gaussian2D& h = c.hard.roles[j];
    c.roles.push_back({static_cast<int>(j), kl_divergence(s, h), kl_divergence(h, s),
                       bhattacharyya_distance(s, h), role_area(s), role_area(h)});
  }
  if (opts.overlap_samples >= 2) {
    c.soft_overlap = overlap_penalty(c.soft.formation, opts.overlap_samples, cfg.seed);
    c.hard_overlap = overlap_penalty(c.hard.formation(), opts.overlap_samples, cfg.seed);
  }

  const RowMatrix aligned = aligned_rows(assign_roles(prepared, al, c.soft.densities, {true, cfg.threads}));
  const RowMatrix identity = identity_rows(prepared);
  const int k_top = std::min<int>(opts.k_max, static_cast<int>(prepared.frame_count()));
  for (int k = 2; k <= k_top; ++k) {
    const RowKMeansOptions ko{300, 1e-9, cfg.threads};
    const auto a = kmeans_rows_plusplus(aligned, static_cast<std::size_t>(k), cfg.seed, 3, ko);
    const auto b = kmeans_rows_plusplus(identity, static_cast<std::size_t>(k), cfg.seed, 3, ko);
    c.wce.push_back({k, within_cluster_error(aligned, a.clusters).per_player,
                     within_cluster_error(identity, b.clusters).per_player});
  }
  if (opts.pca_components > 0 && prepared.frame_count() >= 2) {
    const auto pa = pca_variance_explained(aligned);
    const auto pi = pca_variance_explained(identity);
    double ca = 0.0, ci = 0.0;
    const int m = std::min<int>(opts.pca_components, static_cast<int>(pa.size()));
    for (int i = 0; i < m; ++i) {
      ca += pa[static_cast<std::size_t>(i)];
      ci += pi[static_cast<std::size_t>(i)];
      c.pca.push_back({i + 1, ca, ci});
    }
  }
  return c;
}

nlohmann::ordered_json to_json(const Comparison& c) {
  auto overlap = [](const OverlapPenalty& o) {
    return nlohmann::ordered_json{{"value", o.value},
                                  {"std_error", o.std_error},
                                  {"mixture_entropy", o.mixture_entropy},
                                  {"mean_component_entropy", o.mean_component_entropy}};
  };
  nlohmann::ordered_json j;
  j["frames"] = c.frames;
  j["agents"] = c.agents;
  j["soft"] = {{"log_likelihood", c.soft_log_likelihood},
               {"iterations", c.soft.trace.iterations.size()},
               {"converged", c.soft.trace.converged},
               {"soft_kmeans_steps", c.soft.trace.soft_kmeans_steps()},
               {"worst_full_gmm_drop", c.soft.trace.worst_full_gmm_drop()},
               {"overlap_penalty", overlap(c.soft_overlap)}};
  j["hard"] = {{"log_likelihood", c.hard_log_likelihood},
               {"iterations", c.hard.trace.iterations.size()},
               {"converged", c.hard.trace.converged},
               {"oscillated", c.hard.trace.oscillated},
               {"non_monotone", c.hard.trace.non_monotone()},
               {"overlap_penalty", overlap(c.hard_overlap)}};
  j["delta_log_likelihood"] = c.delta();
  auto& roles = j["roles"] = nlohmann::ordered_json::array();
  for (const auto& r : c.roles) {
    roles.push_back({{"role", r.role},
                     {"kl_soft_hard", r.kl_soft_hard},
                     {"kl_hard_soft", r.kl_hard_soft},
                     {"bhattacharyya", r.bhattacharyya},
                     {"area_soft", r.area_soft},
                     {"area_hard", r.area_hard},
                     {"area_difference", r.area_soft - r.area_hard}});
  }
  auto sweep = [](const std::vector<SweepRow>& rows, const char* key) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) arr.push_back({{key, r.k}, {"aligned", r.aligned}, {"identity", r.identity}});
    return arr;
  };
  j["wce"] = sweep(c.wce, "k");
  j["pca"] = sweep(c.pca, "components");
  return j;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("loglog_slope: need two or more matching points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

std::vector<BenchRow> run_bench(const std::vector<int>& ns, std::size_t frames, int reps, std::uint64_t seed) {
  if (reps < 1 || frames < 1) throw InputError("bench: reps and frames must be positive");
  std::vector<BenchRow> rows;
  for (int n : ns) {
    if (n < 2) throw InputError("bench: agent counts must be >= 2");
    FormationSpec fs;
    fs.k = n;
    fs.seed = seed + static_cast<std::uint64_t>(n);
    SampleSpec ss;
    ss.frames = frames;
    ss.seed = seed + static_cast<std::uint64_t>(n);
    const Dataset ds = prepare(sample_dataset(generate_formation(fs), ss).data);
    const FlatPoints flat = flatten(ds);
    const Template init = player_role_init(ds);
    const Formation state = init.as_formation();

    BenchRow row{n, frames, reps, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (int r = 0; r < reps; ++r) {
      auto t0 = std::chrono::steady_clock::now();
      const auto hard = hard_assignment_em(ds, init, 0, {kDefaultEigenFloor, 1});
      auto t1 = std::chrono::steady_clock::now();
      const auto soft = em_step_full(state, flat.points, kDefaultEigenFloor, 1);
      auto t2 = std::chrono::steady_clock::now();
      if (hard.roles.size() != soft.size()) throw NumericError("bench: size mismatch");
      row.hard_seconds = std::min(row.hard_seconds, std::chrono::duration<double>(t1 - t0).count());
      row.soft_seconds = std::min(row.soft_seconds, std::chrono::duration<double>(t2 - t1).count());
    }
    rows.push_back(row);
  }
  return rows;
}

namespace {

struct InputFlags {
  std::string input;
  std::string format;
  std::string incomplete = "drop-frames";
  std::string filter;
  bool key_frames_only = false;
};

struct DiscoveryFlags {
  int k = 0;  // 0: the agent count
  std::uint64_t seed = 0;
  double eig_ratio = 2.0;
  double em_tol = 1e-6;
  int max_iters = 500;
  std::string init = "player-means";
  std::string guard = "global";
  int threads = 1;
};

void add_input_flags(CLI::App* app, InputFlags& f) {
  app->add_option("--input", f.input, "Tracking file")->required();
  app->add_option("--format", f.format, "csv or jsonl (default: from the file extension)")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  app->add_option("--incomplete-frames", f.incomplete, "Frames missing agents")
      ->check(CLI::IsMember({"reject", "drop-frames", "drop-agents", "keep"}));
  app->add_option("--filter", f.filter, "Frame selection, e.g. team=home,period=1|2");
  app->add_flag("--key-frames-only", f.key_frames_only, "Train on event frames only");
}

void add_discovery_flags(CLI::App* app, DiscoveryFlags& f) {
  app->add_option("--k", f.k, "Number of roles (default: agent count)")->check(CLI::NonNegativeNumber);
  app->add_option("--seed", f.seed, "Random seed");
  app->add_option("--eig-ratio", f.eig_ratio, "Eigenvalue ratio bound of the EM guard");
  app->add_option("--em-tol", f.em_tol, "Relative log-likelihood tolerance");
  app->add_option("--max-iters", f.max_iters, "EM iteration cap");
  app->add_option("--init", f.init, "K-Means initialization")->check(CLI::IsMember({"player-means", "random"}));
  app->add_option("--guard", f.guard, "Guard scope")->check(CLI::IsMember({"global", "per-component"}));
  app->add_option("--threads", f.threads, "Worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
}

DiscoveryConfig make_config(const DiscoveryFlags& f, std::size_t agents) {
  DiscoveryConfig c;
  c.k = f.k > 0 ? f.k : static_cast<int>(agents);
  c.seed = f.seed;
  c.eig_ratio_bound = f.eig_ratio;
  c.em_tol = f.em_tol;
  c.max_iters = f.max_iters;
  c.init = init_mode_from_string(f.init);
  c.guard = f.guard == "global" ? GuardScope::Global : GuardScope::PerComponent;
  c.threads = f.threads;
  c.validate();
  return c;
}

nlohmann::ordered_json input_config(const InputFlags& f) {
  return {{"input", f.input},
          {"format", f.format},
          {"incomplete_frames", f.incomplete},
          {"filter", f.filter},
          {"key_frames_only", f.key_frames_only}};
}

nlohmann::ordered_json ordered(const nlohmann::json& j) { return nlohmann::ordered_json::parse(j.dump()); }

TrackingFormat format_for(const std::string& flag, const std::string& path) {
  if (!flag.empty()) return tracking_format_from_string(flag);
  return fs::path(path).extension() == ".jsonl" ? TrackingFormat::Jsonl : TrackingFormat::Csv;
}

// Read, select and normalize; the manifest gets the input hash and frame counts.
Dataset load(const InputFlags& f, Manifest& m) {
  if (!fs::exists(f.input)) throw InputError("cannot open input file '" + f.input + "'");
  m.add_input(f.input);
  ParseOptions po{format_for(f.format, f.input), incomplete_policy_from_string(f.incomplete)};
  Dataset ds = m.timed("read", [&] { return read_tracking(f.input, po); });
  m.set("input_frames", ds.frame_count());
  if (!trim(f.filter).empty()) {
    const FramePredicate p = parse_filter(f.filter);
    ds = filter_frames(std::move(ds), p.test, p.text);
  }
  ds = m.timed("prepare", [&] { return prepare(std::move(ds), f.key_frames_only); });
  m.set("training_frames", ds.frame_count());
  m.set("training_rows", ds.point_count());
  return ds;
}

Template read_template(const std::string& path, Manifest& m) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open template file '" + path + "'");
  m.add_input(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("template file '" + path + "': " + e.what());
  }
  return template_from_json(j);
}

class OutDir {
 public:
  OutDir(const std::string& dir, Manifest& m) : dir_(dir), m_(m) { fs::create_directories(dir_); }

  template <class F>
  void write(const std::string& name, F&& fn) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw InputError("cannot write '" + (dir_ / name).string() + "'");
    fn(out);
    m_.add_output(name);
  }
  void write_json(const std::string& name, const nlohmann::ordered_json& j) {
    write(name, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  }
  void finish() { m_.write(dir_); }

 private:
  fs::path dir_;
  Manifest& m_;
};

void note_convergence(const DiscoveryResult& r, Manifest& m, const std::string& where) {
  if (!r.kmeans.converged) m.warn(where + "K-Means stopped at the iteration cap");
  if (!r.trace.converged) m.warn(where + "EM stopped at the iteration cap");
}

TemplateAlignment identity_alignment(const Formation& f) {
  TemplateAlignment a;
  a.aligned = Template::from_formation(f);
  a.component_for_role.resize(f.size());
  std::iota(a.component_for_role.begin(), a.component_for_role.end(), 0);
  return a;
}

nlohmann::ordered_json discovery_summary(const DiscoveryResult& r) {
  return {{"kmeans_iterations", r.kmeans.iterations},
          {"kmeans_converged", r.kmeans.converged},
          {"em_iterations", r.trace.iterations.size()},
          {"em_converged", r.trace.converged},
          {"soft_kmeans_steps", r.trace.soft_kmeans_steps()},
          {"final_log_likelihood",
           r.trace.iterations.empty() ? r.trace.initial_log_likelihood : r.trace.iterations.back().log_likelihood}};
}

int cmd_discover(const InputFlags& in, const DiscoveryFlags& df, const std::string& parent_path,
                 const std::string& out_dir) {
  Manifest m("discover");
  const Dataset ds = load(in, m);
  const DiscoveryConfig cfg = make_config(df, ds.agent_count());
  auto config = input_config(in);
  config["discovery"] = ordered(to_json(cfg));
  config["parent_template"] = parent_path;
  m.set_config(config);
  m.set_seed(cfg.seed);

  const DiscoveryResult res = m.timed("discover", [&] { return discover_formation(ds, cfg); });
  note_convergence(res, m, "");
  TemplateAlignment al = identity_alignment(res.formation);
  if (!parent_path.empty()) {
    const Template parent = read_template(parent_path, m);
    al = m.timed("align", [&] { return match_template(res.formation, parent); });
    m.set("alignment_cost", al.total_cost);
  }
  const AlignedDataset aligned =
      m.timed("assign", [&] { return assign_roles(ds, al, res.densities, {true, cfg.threads}); });
  m.set("discovery", discovery_summary(res));

  OutDir out(out_dir, m);
  out.write_json("formation.json", ordered(to_json(res.formation)));
  out.write_json("template.json", ordered(to_json(al.aligned)));
  out.write("em_trace.csv", [&](std::ostream& o) { res.trace.write_csv(o); });
  out.write("roles.csv", [&](std::ostream& o) { aligned.write_csv(o); });
  out.finish();
  return 0;
}

int cmd_compare(const InputFlags& in, const DiscoveryFlags& df, const CompareOptions& co,
                const std::string& out_dir) {
  Manifest m("compare");
  const Dataset ds = load(in, m);
  const DiscoveryConfig cfg = make_config(df, ds.agent_count());
  auto config = input_config(in);
  config["discovery"] = ordered(to_json(cfg));
  config["k_max"] = co.k_max;
  config["pca_components"] = co.pca_components;
  config["hard_max_iters"] = co.hard_max_iters;
  config["overlap_samples"] = co.overlap_samples;
  m.set_config(config);
  m.set_seed(cfg.seed);

  const Comparison c = m.timed("compare", [&] { return compare_methods(ds, cfg, co); });
  note_convergence(c.soft, m, "soft: ");
  if (c.hard.trace.oscillated) m.warn("hard: assignment states repeated (oscillation)");
  if (!c.hard.trace.converged && !c.hard.trace.oscillated) m.warn("hard: stopped at the iteration cap");

  OutDir out(out_dir, m);
  out.write_json("compare_report.json", to_json(c));
  out.write("compare_roles.csv", [&](std::ostream& o) {
    o << "role,kl_soft_hard,kl_hard_soft,bhattacharyya,area_soft,area_hard,area_difference\n";
    for (const auto& r : c.roles) {
      o << r.role << ',' << num(r.kl_soft_hard) << ',' << num(r.kl_hard_soft) << ',' << num(r.bhattacharyya)
        << ',' << num(r.area_soft) << ',' << num(r.area_hard) << ',' << num(r.area_soft - r.area_hard) << '\n';
    }
  });
  out.write("wce.csv", [&](std::ostream& o) {
    o << "k,aligned,identity\n";
    for (const auto& r : c.wce) o << r.k << ',' << num(r.aligned) << ',' << num(r.identity) << '\n';
  });
  out.write("pca.csv", [&](std::ostream& o) {
    o << "components,aligned,identity\n";
    for (const auto& r : c.pca) o << r.k << ',' << num(r.aligned) << ',' << num(r.identity) << '\n';
  });
  out.write("soft_trace.csv", [&](std::ostream& o) { c.soft.trace.write_csv(o); });
  out.write("hard_trace.csv", [&](std::ostream& o) { c.hard.trace.write_csv(o); });
  out.write_json("soft_template.json", ordered(to_json(c.soft_roles)));
  out.write_json("hard_template.json", ordered(to_json(c.hard.roles)));
  out.finish();
  return 0;
}

int cmd_bench(const std::vector<int>& ns, std::size_t frames, int reps, std::uint64_t seed,
              const std::string& out_dir) {
  Manifest m("bench");
  m.set_config({{"n_range", ns}, {"frames", frames}, {"reps", reps}, {"seed", seed}, {"threads", 1}});
  m.set_seed(seed);
  const auto rows = m.timed("bench", [&] { return run_bench(ns, frames, reps, seed); });
  std::vector<double> x, hard, soft;
  for (const auto& r : rows) {
    x.push_back(r.n);
    hard.push_back(r.hard_seconds);
    soft.push_back(r.soft_seconds);
  }
  nlohmann::ordered_json fit;
  if (rows.size() >= 2) {
    fit["hard_slope"] = loglog_slope(x, hard);
    fit["soft_slope"] = loglog_slope(x, soft);
    fit["slope_difference"] = fit["hard_slope"].get<double>() - fit["soft_slope"].get<double>();
  }
  auto& ratios = fit["ratio"] = nlohmann::ordered_json::object();
  for (const auto& r : rows) ratios[std::to_string(r.n)] = r.ratio();

  OutDir out(out_dir, m);
  out.write("bench.csv", [&](std::ostream& o) {
    o << "n,frames,reps,hard_seconds,soft_seconds,ratio\n";
    for (const auto& r : rows) {
      o << r.n << ',' << r.frames << ',' << r.reps << ',' << num(r.hard_seconds) << ',' << num(r.soft_seconds)
        << ',' << num(r.ratio()) << '\n';
    }
  });
  out.write_json("bench_fit.json", fit);
  out.finish();
  return 0;
}

std::string context_label(const Frame& f, const std::vector<std::string>& keys) {
  std::string s;
  for (const auto& k : keys) {
    if (!s.empty()) s += ',';
    s += k + '=' + frame_field(f, k);
  }
  return s.empty() ? "all" : s;
}

int cmd_context(const InputFlags& in, const DiscoveryFlags& df, const std::string& group_by,
                const std::string& parent_path, const std::string& out_dir) {
  Manifest m("context");
  const Dataset ds = load(in, m);
  std::vector<std::string> keys;
  if (group_by != "none") {
    for (const auto& k : split(group_by, ',')) {
      if (k != "team" && k != "game" && k != "period") throw InputError("--group-by accepts team, game, period or none");
      keys.push_back(k);
    }
  }
  // Groups in order of first appearance.
  std::vector<std::string> labels;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t s = 0; s < ds.frames.size(); ++s) {
    const std::string label = context_label(ds.frames[s], keys);
    auto [it, fresh] = members.try_emplace(label);
    if (fresh) labels.push_back(label);
    it->second.push_back(s);
  }
  const std::size_t k_default = ds.frames.front().positions.size();
  DiscoveryConfig cfg = make_config(df, k_default);
  auto config = input_config(in);
  config["discovery"] = ordered(to_json(cfg));
  config["group_by"] = group_by;
  config["parent_template"] = parent_path;
  m.set_config(config);
  m.set_seed(cfg.seed);

  auto fit = [&](const Dataset& d, const std::string& where) {
    DiscoveryConfig c = cfg;
    if (c.init == InitMode::PlayerMeans && d.agent_count() != static_cast<std::size_t>(c.k)) {
      c.init = InitMode::Random;
      m.warn(where + std::to_string(d.agent_count()) + " agents for " + std::to_string(c.k) +
             " roles, using random initialization");
    }
    DiscoveryResult r = discover_formation(d, c);
    note_convergence(r, m, where);
    return r;
  };

  Template global;
  if (!parent_path.empty()) {
    global = read_template(parent_path, m);
  } else {
    global = m.timed("global", [&] { return Template::from_formation(fit(ds, "global: ").formation); });
  }

  OutDir out(out_dir, m);
  out.write_json("global_template.json", ordered(to_json(global)));
  nlohmann::ordered_json index = nlohmann::ordered_json::array();
  m.timed("contexts", [&] {
    for (std::size_t g = 0; g < labels.size(); ++g) {
      const auto& rows = members[labels[g]];
      Dataset sub;
      for (std::size_t r : rows) sub.frames.push_back(ds.frames[r]);
      sub.refresh_agents();
      const DiscoveryResult r = fit(sub, labels[g] + ": ");
      const TemplateAlignment al = match_template(r.formation, global);
      const std::string file = "context_" + std::to_string(g) + ".json";
      nlohmann::ordered_json j;
      j["context"] = labels[g];
      j["frames"] = sub.frame_count();
      j["alignment_cost"] = al.total_cost;
      j["component_for_role"] = al.component_for_role;
      j["template"] = ordered(to_json(al.aligned));
      out.write_json(file, j);
      index.push_back({{"context", labels[g]}, {"frames", sub.frame_count()}, {"file", file},
                       {"em_converged", r.trace.converged}});
    }
  });
  out.write_json("contexts.json", index);
  out.finish();
  return 0;
}

int cmd_tree(const InputFlags& in, const DiscoveryFlags& df, TreeOptions opts, const std::string& parent_path,
             const std::string& out_dir) {
  Manifest m("tree");
  const Dataset ds = load(in, m);
  opts.discovery = make_config(df, ds.agent_count());
  opts.split.seed = opts.discovery.seed;
  auto config = input_config(in);
  config["discovery"] = ordered(to_json(opts.discovery));
  config["max_depth"] = opts.max_depth;
  config["min_node_rows"] = opts.min_node_rows;
  config["min_relative_gain"] = opts.min_relative_gain;
  config["single_cluster_score"] = opts.split.single_cluster_score;
  config["parent_template"] = parent_path;
  m.set_config(config);
  m.set_seed(opts.discovery.seed);

  Template root;
  if (!parent_path.empty()) {
    root = read_template(parent_path, m);
  } else {
    root = m.timed("root", [&] { return Template::from_formation(discover_formation(ds, opts.discovery).formation); });
  }
  const TemplateTree tree = m.timed("tree", [&] { return learn_tree(ds, root, opts); });
  m.set("nodes", tree.nodes.size());
  m.set("depth", tree.depth());

  OutDir out(out_dir, m);
  out.write_json("tree.json", ordered(tree.to_json()));
  out.finish();
  return 0;
}

struct SynthFlags {
  FormationSpec formation;
  SampleSpec sample;
  int contexts = 1;
  std::string format = "csv";
};

int cmd_synth(SynthFlags f, const std::string& out_dir) {
  Manifest m("synth");
  if (f.contexts < 1) throw InputError("--contexts must be >= 1");
  nlohmann::ordered_json config{{"k", f.formation.k},
                                {"separation", f.formation.separation},
                                {"sigma", f.formation.sigma},
                                {"min_anisotropy", f.formation.min_anisotropy},
                                {"max_anisotropy", f.formation.max_anisotropy},
                                {"frames", f.sample.frames},
                                {"swap_rate", f.sample.swap_rate},
                                {"mean_swap_length", f.sample.mean_swap_length},
                                {"event_rate", f.sample.event_rate},
                                {"contexts", f.contexts},
                                {"format", f.format},
                                {"seed", f.sample.seed}};
  m.set_config(config);
  m.set_seed(f.sample.seed);

  std::vector<Dataset> parts;
  std::vector<Sample> samples;
  std::vector<Template> templates;
  m.timed("generate", [&] {
    for (int c = 0; c < f.contexts; ++c) {
      FormationSpec fs = f.formation;
      fs.seed = CounterRng::mix(f.sample.seed + static_cast<std::uint64_t>(c));
      SampleSpec ss = f.sample;
      ss.seed = CounterRng::mix(f.sample.seed ^ (0x5a5aULL + static_cast<std::uint64_t>(c)));
      ss.first_frame_id = static_cast<std::int64_t>(c) * static_cast<std::int64_t>(f.sample.frames);
      if (f.contexts > 1) {
        ss.context.team = "team" + std::to_string(c + 1);
        ss.agent_prefix = "t" + std::to_string(c + 1) + "p";
      }
      templates.push_back(generate_formation(fs));
      samples.push_back(sample_dataset(templates.back(), ss));
      parts.push_back(samples.back().data);
    }
  });
  const Dataset all = concatenate(parts);

  OutDir out(out_dir, m);
  const std::string name = f.format == "jsonl" ? "tracking.jsonl" : "tracking.csv";
  out.write(name, [&](std::ostream& o) {
    if (f.format == "jsonl") write_tracking_jsonl(o, all);
    else write_tracking_csv(o, all);
  });
  out.write("truth.jsonl", [&](std::ostream& o) {
    for (const auto& s : samples) s.truth.write_jsonl(o);
  });
  for (int c = 0; c < f.contexts; ++c) {
    const std::string suffix = f.contexts > 1 ? "_team" + std::to_string(c + 1) : "";
    out.write_json("template" + suffix + ".json", ordered(to_json(templates[static_cast<std::size_t>(c)])));
    out.write_json("centered_template" + suffix + ".json",
                   ordered(to_json(centered_template(templates[static_cast<std::size_t>(c)]))));
  }
  out.finish();
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Role discovery and alignment for multi-agent tracking data", kToolName};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  InputFlags in;
  DiscoveryFlags df;
  std::string out_dir, parent_path;

  auto* discover = app.add_subcommand("discover", "Learn a formation and its role assignments");
  add_input_flags(discover, in);
  add_discovery_flags(discover, df);
  discover->add_option("--parent-template", parent_path, "Template JSON to align the roles to");
  discover->add_option("--out", out_dir, "Output directory")->required();

  CompareOptions co;
  auto* compare = app.add_subcommand("compare", "Soft discovery against hard-assignment EM");
  add_input_flags(compare, in);
  add_discovery_flags(compare, df);
  compare->add_option("--k-max", co.k_max, "Largest k of the WCE sweep");
  compare->add_option("--pca-components", co.pca_components, "Components in the PCA table");
  compare->add_option("--hard-max-iters", co.hard_max_iters, "Hard EM iteration cap");
  compare->add_option("--overlap-samples", co.overlap_samples, "Monte-Carlo samples for the overlap penalty");
  compare->add_option("--out", out_dir, "Output directory")->required();

  std::vector<int> ns{4, 6, 8, 10, 12, 14};
  std::size_t bench_frames = 1500;
  int reps = 3;
  std::uint64_t bench_seed = 0;
  auto* bench = app.add_subcommand("bench", "Per-iteration timing of both methods across agent counts");
  bench->add_option("--n-range", ns, "Agent counts")->delimiter(',');
  bench->add_option("--frames", bench_frames, "Frames per dataset");
  bench->add_option("--reps", reps, "Repetitions (fastest is kept)");
  bench->add_option("--seed", bench_seed, "Random seed");
  bench->add_option("--out", out_dir, "Output directory")->required();

  std::string group_by = "team";
  auto* context = app.add_subcommand("context", "Per-context formations aligned to a shared template");
  add_input_flags(context, in);
  add_discovery_flags(context, df);
  context->add_option("--group-by", group_by, "team, game, period (comma-combined) or none");
  context->add_option("--parent-template", parent_path, "Shared template (default: learned from all frames)");
  context->add_option("--out", out_dir, "Output directory")->required();

  TreeOptions to;
  auto* tree = app.add_subcommand("tree", "Hierarchy of sub-templates");
  add_input_flags(tree, in);
  add_discovery_flags(tree, df);
  tree->add_option("--max-depth", to.max_depth, "Depth limit, the root is 1");
  tree->add_option("--min-node-rows", to.min_node_rows, "Smallest node that may be split");
  tree->add_option("--min-gain", to.min_relative_gain, "Minimum relative loss reduction of a split");
  tree->add_option("--single-cluster-score", to.split.single_cluster_score, "Score a split must beat");
  tree->add_option("--parent-template", parent_path, "Root parent template");
  tree->add_option("--out", out_dir, "Output directory")->required();

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "Synthetic tracking data with ground truth");
  synth->add_option("--k", sf.formation.k, "Agents and roles");
  synth->add_option("--frames", sf.sample.frames, "Frames per context");
  synth->add_option("--separation", sf.formation.separation, "Minimum role mean distance in sigmas");
  synth->add_option("--sigma", sf.formation.sigma, "Role spread along the major axis, m");
  synth->add_option("--min-anisotropy", sf.formation.min_anisotropy, "Smallest eigenvalue ratio");
  synth->add_option("--max-anisotropy", sf.formation.max_anisotropy, "Largest eigenvalue ratio");
  synth->add_option("--swap-rate", sf.sample.swap_rate, "Per-frame chance that two agents start swapping");
  synth->add_option("--mean-swap-length", sf.sample.mean_swap_length, "Mean swap duration, frames");
  synth->add_option("--event-rate", sf.sample.event_rate, "Fraction of event frames");
  synth->add_option("--contexts", sf.contexts, "Teams, each with its own formation");
  synth->add_option("--seed", sf.sample.seed, "Random seed");
  synth->add_option("--format", sf.format, "csv or jsonl")->check(CLI::IsMember({"csv", "jsonl"}));
  synth->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*discover) return cmd_discover(in, df, parent_path, out_dir);
    if (*compare) return cmd_compare(in, df, co, out_dir);
    if (*bench) return cmd_bench(ns, bench_frames, reps, bench_seed, out_dir);
    if (*context) return cmd_context(in, df, group_by, parent_path, out_dir);
    if (*tree) return cmd_tree(in, df, to, parent_path, out_dir);
    if (*synth) return cmd_synth(sf, out_dir);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{kToolName};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace rolealign::cli
