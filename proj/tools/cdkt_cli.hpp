#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cdkt/cdkt.hpp"

namespace cdkt::cli {

class CliError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path, const std::string& flag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError(flag + ": cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Outputs are collected in memory and only written once every input has been
// validated, so failed runs leave no partial files behind.
class OutputSet {
 public:
  void add(std::string path, std::string content) { files_.emplace_back(std::move(path), std::move(content)); }

  void commit() const {
    for (const auto& [path, content] : files_) {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      if (!out) throw CliError("cannot write '" + path + "'");
      out << content;
      if (!out) throw CliError("failed writing '" + path + "'");
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

inline std::vector<Cascade> load_cascades(const std::string& path, const std::string& flag) {
  std::istringstream in(read_file(path, flag));
  try {
    return parse_cascades(in);
  } catch (const ParseError& e) {
    throw CliError(flag + " '" + path + "': " + e.what());
  }
}

inline LatentModel load_model(const std::string& path) {
  std::istringstream in(read_file(path, "--model"));
  try {
    return read_model(in);
  } catch (const std::exception& e) {
    throw CliError("--model '" + path + "': " + e.what());
  }
}

inline std::vector<std::string> load_user_list(const std::string& path) {
  std::istringstream in(read_file(path, "--users"));
  std::vector<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto id = text::trim(line);
    if (id.empty() || id.front() == '#') continue;
    if (!text::is_valid_id(id)) throw CliError("--users: line " + std::to_string(line_no) + ": invalid user id");
    ids.emplace_back(id);
  }
  return ids;
}

// Fails on the first cascade user the model does not know.
inline void check_known_users(const LatentModel& model, std::span<const Cascade> cascades) {
  for (const auto& c : cascades)
    for (const auto& inf : c.infections)
      if (!model.users().contains(inf.user))
        throw CliError("cascade '" + c.id + "' references user '" + inf.user + "' unknown to the model");
}

// `key=value` lines become `--key value` arguments.
inline std::vector<std::string> config_arguments(const std::string& path) {
  std::istringstream in(read_file(path, "--config"));
  std::vector<std::string> args;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string_view::npos)
      throw CliError("--config '" + path + "': line " + std::to_string(line_no) + ": expected key=value");
    args.push_back("--" + std::string(text::trim(trimmed.substr(0, eq))));
    args.emplace_back(text::trim(trimmed.substr(eq + 1)));
  }
  return args;
}

struct MetricSelection {
  bool map = false;
  bool pr_curve = false;
  std::vector<std::size_t> ks;
};

inline MetricSelection parse_metrics(const std::string& spec, const std::vector<std::size_t>& default_ks) {
  MetricSelection sel;
  for (auto tok : text::split(spec, ',')) {
    tok = text::trim(tok);
    if (tok == "map") {
      sel.map = true;
    } else if (tok == "pr" || tok == "pr-curve") {
      sel.pr_curve = true;
    } else if (tok == "p@k") {
      sel.ks.insert(sel.ks.end(), default_ks.begin(), default_ks.end());
    } else if (tok.starts_with("p@")) {
      auto k = text::parse_int<std::size_t>(tok.substr(2));
      if (!k || *k == 0) throw CliError("--metrics: invalid metric '" + std::string(tok) + "'");
      sel.ks.push_back(*k);
    } else {
      throw CliError("--metrics: unknown metric '" + std::string(tok) + "' (expected map, p@k, p@<K>, pr)");
    }
  }
  std::sort(sel.ks.begin(), sel.ks.end());
  sel.ks.erase(std::unique(sel.ks.begin(), sel.ks.end()), sel.ks.end());
  return sel;
}

struct Options {
  std::string in, out, model, users, trace, config, graph, world_out;
  std::string variant = "cdkt", tau_update = "gradient", outside_branch = "gated";
  std::string world = "planted";
  std::size_t dim = 500;
  std::uint64_t iters = 1'000'000;
  double alpha0 = 0.05, decay = 1e-5;
  std::uint64_t seed = 1;
  std::uint64_t patience = 0;
  std::uint64_t probe_interval = 10'000;
  double test_fraction = 0.2;
  std::size_t top_users = 0;
  std::string metrics = "map,p@k,pr";
  std::vector<std::size_t> k{50};
  std::size_t threads = 1;
  std::size_t num_users = 200, num_cascades = 400, latent_dim = 2, clusters = 1;
  double infect_fraction = 0.2, noise = 0.0, radius_ratio = 4.0, avg_degree = 3.0, edge_prob = 0.1;
};

inline TrainConfig train_config(const Options& o) {
  TrainConfig c;
  c.dim = o.dim;
  c.iterations = o.iters;
  c.alpha0 = o.alpha0;
  c.decay = o.decay;
  c.seed = o.seed;
  c.variant = o.variant == "cdk" ? Variant::CDK : Variant::CDKT;
  if (o.patience > 0) c.patience = o.patience;
  c.probe_interval = o.probe_interval;
  c.rules.tau_update = o.tau_update == "paper" ? TauUpdate::Paper : TauUpdate::Gradient;
  c.rules.outside_branch = o.outside_branch == "paper" ? OutsideBranch::Paper : OutsideBranch::Gated;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw CliError(e.what());
  }
  return c;
}

inline std::string to_text(auto&& writer) {
  std::ostringstream ss;
  writer(ss);
  return ss.str();
}

inline void cmd_generate(const Options& o, std::ostream& out) {
  OutputSet files;
  std::vector<Cascade> cascades;
  if (o.world == "planted") {
    if (o.clusters != 1 && o.clusters != 2) throw CliError("--clusters must be 1 or 2");
    PlantedWorld w = o.clusters == 1
                         ? make_uniform_world(o.num_users, o.latent_dim, o.infect_fraction, o.seed, o.noise)
                         : make_two_cluster_world(o.num_users, o.latent_dim, o.radius_ratio, o.infect_fraction,
                                                  o.seed, o.noise);
    cascades = generate_planted(w, o.num_cascades, derive_seed(o.seed, "generate"));
    if (!o.world_out.empty()) files.add(o.world_out, to_text([&](std::ostream& s) { write_model(s, w.embedding); }));
  } else {
    IcWorld g;
    if (!o.graph.empty()) {
      std::istringstream in(read_file(o.graph, "--graph"));
      try {
        g = IcGraph(parse_ic_edges(in));
      } catch (const std::exception& e) {
        throw CliError("--graph '" + o.graph + "': " + e.what());
      }
    } else {
      g = random_ic_world(o.num_users, o.avg_degree, o.edge_prob, o.seed);
    }
    cascades = generate_ic(g, o.num_cascades, derive_seed(o.seed, "generate"));
    if (!o.world_out.empty()) files.add(o.world_out, to_text([&](std::ostream& s) { write_ic_edges(s, g); }));
  }
  files.add(o.out, to_text([&](std::ostream& s) { write_cascades(s, cascades); }));
  files.commit();
  out << "generated " << cascades.size() << " cascades -> " << o.out << '\n';
}

inline void cmd_prepare(const Options& o, std::ostream& out) {
  auto cascades = load_cascades(o.in, "--in");
  std::vector<std::string> users;
  if (o.top_users > 0) {
    auto filtered = filter_top_users(cascades, o.top_users);
    cascades = std::move(filtered.cascades);
    users = std::move(filtered.users);
  } else {
    users = collect_users(cascades).ids();
  }
  if (!(o.test_fraction > 0.0 && o.test_fraction < 1.0)) throw CliError("--test-fraction must be in (0, 1)");
  if (cascades.size() < 2) throw CliError("--in: need at least 2 cascades after filtering, got " +
                                          std::to_string(cascades.size()));
  const auto ds = split_train_test(cascades, o.test_fraction, o.seed);
  OutputSet files;
  files.add(o.out + ".train", to_text([&](std::ostream& s) { write_cascades(s, ds.train); }));
  files.add(o.out + ".test", to_text([&](std::ostream& s) { write_cascades(s, ds.test); }));
  files.add(o.out + ".users", to_text([&](std::ostream& s) {
              for (const auto& u : users) s << u << '\n';
            }));
  files.commit();
  out << "users=" << users.size() << " train=" << ds.train.size() << " test=" << ds.test.size() << '\n';
}

inline void cmd_train(const Options& o, std::ostream& out) {
  const auto config = train_config(o);
  const auto cascades = load_cascades(o.in, "--in");
  UserTable users = o.users.empty() ? collect_users(cascades) : UserTable(load_user_list(o.users));
  if (users.empty()) throw CliError("--in: no users");
  for (const auto& c : cascades)
    for (const auto& inf : c.infections)
      if (!users.contains(inf.user))
        throw CliError("--users: cascade '" + c.id + "' references unlisted user '" + inf.user + "'");

  TrainResult result = [&] {
    try {
      return train(users, cascades, config);
    } catch (const SamplingError& e) {
      throw CliError(std::string("--in: ") + e.what());
    }
  }();
  OutputSet files;
  files.add(o.out, to_text([&](std::ostream& s) { write_model(s, result.model); }));
  files.add(o.trace.empty() ? o.out + ".trace" : o.trace,
            to_text([&](std::ostream& s) { write_trace(s, result.trace); }));
  files.commit();
  const auto& last = result.trace.probes.back();
  out << "iterations=" << result.trace.final_iteration << " loss=" << text::format_real17(last.loss)
      << " tau=" << (last.tau ? text::format_real17(*last.tau) : std::string("none")) << '\n';
}

inline void cmd_predict(const Options& o, std::ostream& out) {
  const auto model = load_model(o.model);
  const auto cascades = load_cascades(o.in, "--in");
  check_known_users(model, cascades);
  const auto predictions = predict_all(model, cascades, o.threads);
  OutputSet files;
  files.add(o.out, to_text([&](std::ostream& s) { write_predictions(s, model, predictions); }));
  files.commit();
  out << "predicted " << predictions.size() << " cascades -> " << o.out << '\n';
}

inline void cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
  const auto selection = parse_metrics(o.metrics, o.k);
  const auto model = load_model(o.model);
  const auto cascades = load_cascades(o.in, "--in");
  check_known_users(model, cascades);
  if (cascades.empty()) throw CliError("--in: no cascades to evaluate");

  MetricsReport report;
  report.cascades = cascades.size();
  const auto predictions = predict_all(model, cascades, o.threads);
  if (selection.map) {
    const auto m = mean_average_precision_detail(predictions, cascades, model.users());
    report.map = m.map;
    report.ap_per_cascade = m.per_cascade;
    report.degenerate_cascades = m.degenerate;
    if (m.degenerate > 0)
      err << "warning: " << m.degenerate << " cascade(s) have no infected user besides the source; AP=0\n";
  }
  if (!selection.ks.empty() || selection.pr_curve) {
    const auto pool = pool_predictions(model, cascades, o.threads);
    report.pool_size = pool.size();
    for (std::size_t k : selection.ks) {
      if (k > pool.size())
        throw CliError("--metrics: p@" + std::to_string(k) + " needs at least " + std::to_string(k) +
                       " pooled entries, pool has " + std::to_string(pool.size()));
      report.p_at_k.emplace_back(k, precision_at_k(pool, k));
    }
    if (selection.pr_curve) {
      if (pool.relevant_count() == 0) throw CliError("--metrics: pr curve needs at least one relevant entry");
      report.pr_curve = precision_recall_curve(pool);
    }
  }
  OutputSet files;
  files.add(o.out, to_text([&](std::ostream& s) { write_report(s, report); }));
  files.commit();
  if (report.map) out << "map=" << text::format_real17(*report.map) << '\n';
  for (const auto& [k, p] : report.p_at_k) out << "p@" << k << '=' << text::format_real17(p) << '\n';
}

// Runs the CLI on an argument vector (without the program name). Returns the
// process exit code.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"Latent diffusion-kernel embeddings for cascade prediction", "cdkt"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto add_config = [&](CLI::App* sub) { sub->add_option("--config", o.config, "key=value config file"); };
  auto seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "Random seed")->capture_default_str(); };

  auto* gen = app.add_subcommand("generate", "Generate synthetic cascades");
  gen->add_option("--out", o.out, "Output cascade file")->required();
  gen->add_option("--world", o.world, "Generator")->check(CLI::IsMember({"planted", "ic"}))->capture_default_str();
  gen->add_option("--users", o.num_users, "Number of users")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--cascades", o.num_cascades, "Number of cascades")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--latent-dim", o.latent_dim, "Planted dimension")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--infect-fraction", o.infect_fraction, "Mean infected fraction")->capture_default_str();
  gen->add_option("--noise", o.noise, "Timestamp jitter scale")->capture_default_str();
  gen->add_option("--clusters", o.clusters, "1 (uniform) or 2 (two clusters)")->capture_default_str();
  gen->add_option("--radius-ratio", o.radius_ratio, "Cluster radius ratio")->capture_default_str();
  gen->add_option("--graph", o.graph, "IC edge file (src, dst, probability)");
  gen->add_option("--avg-degree", o.avg_degree, "Random IC graph mean out-degree")->capture_default_str();
  gen->add_option("--edge-prob", o.edge_prob, "Random IC graph edge probability")->capture_default_str();
  gen->add_option("--world-out", o.world_out, "Write the generating world");
  seed(gen);
  add_config(gen);

  auto* prep = app.add_subcommand("prepare", "Filter users and split train/test");
  prep->add_option("--in", o.in, "Cascade file")->required();
  prep->add_option("--out", o.out, "Output prefix (.train, .test, .users)")->required();
  prep->add_option("--top-users", o.top_users, "Keep the most active users (0 keeps all)")->capture_default_str();
  prep->add_option("--test-fraction", o.test_fraction, "Test fraction")->capture_default_str();
  seed(prep);
  add_config(prep);

  auto* tr = app.add_subcommand("train", "Train a latent model");
  tr->add_option("--in", o.in, "Training cascades")->required();
  tr->add_option("--out", o.out, "Model file")->required();
  tr->add_option("--users", o.users, "User list (default: users in --in)");
  tr->add_option("--trace", o.trace, "Trace TSV (default: <out>.trace)");
  tr->add_option("--variant", o.variant, "cdk or cdkt")->check(CLI::IsMember({"cdk", "cdkt"}))->capture_default_str();
  tr->add_option("--dim", o.dim, "Latent dimension")->capture_default_str();
  tr->add_option("--iters", o.iters, "SGD iterations")->capture_default_str();
  tr->add_option("--alpha0", o.alpha0, "Initial learning rate")->capture_default_str();
  tr->add_option("--decay", o.decay, "Learning-rate decay")->capture_default_str();
  tr->add_option("--patience", o.patience, "Stop after this many probes without improvement (0 disables)")
      ->capture_default_str();
  tr->add_option("--probe-interval", o.probe_interval, "Iterations between loss probes")->capture_default_str();
  tr->add_option("--tau-update", o.tau_update, "gradient or paper")
      ->check(CLI::IsMember({"gradient", "paper"}))
      ->capture_default_str();
  tr->add_option("--outside-branch", o.outside_branch, "gated or paper")
      ->check(CLI::IsMember({"gated", "paper"}))
      ->capture_default_str();
  seed(tr);
  add_config(tr);

  auto* pr = app.add_subcommand("predict", "Rank users for each cascade source");
  pr->add_option("--model", o.model, "Model file")->required();
  pr->add_option("--in", o.in, "Cascades to predict")->required();
  pr->add_option("--out", o.out, "Prediction TSV")->required();
  pr->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  add_config(pr);

  auto* ev = app.add_subcommand("evaluate", "Compute MAP, P@k and the PR curve");
  ev->add_option("--model", o.model, "Model file")->required();
  ev->add_option("--in", o.in, "Test cascades")->required();
  ev->add_option("--out", o.out, "Report file")->required();
  ev->add_option("--metrics", o.metrics, "Comma list of map, p@k, p@<K>, pr")->capture_default_str();
  ev->add_option("--k", o.k, "K values for p@k")->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  ev->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  add_config(ev);

  // Config entries go ahead of the explicit flags; a key also given on the
  // command line is dropped from the config so the flag wins outright.
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] != "--config") continue;
    const std::string path = args[i + 1];
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
    std::vector<std::string> extra;
    try {
      extra = config_arguments(path);
    } catch (const CliError& e) {
      err << "error: " << e.what() << '\n';
      return 1;
    }
    auto explicit_flag = [&](const std::string& key) {
      return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
        return a == key || (a.starts_with(key) && a.size() > key.size() && a[key.size()] == '=');
      });
    };
    std::vector<std::string> kept;
    for (std::size_t j = 0; j + 1 < extra.size(); j += 2) {
      if (explicit_flag(extra[j])) continue;
      kept.push_back(extra[j]);
      kept.push_back(extra[j + 1]);
    }
    args.insert(args.begin() + (args.empty() ? 0 : 1), kept.begin(), kept.end());
    break;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*gen) cmd_generate(o, out);
    else if (*prep) cmd_prepare(o, out);
    else if (*tr) cmd_train(o, out);
    else if (*pr) cmd_predict(o, out);
    else if (*ev) cmd_evaluate(o, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace cdkt::cli
