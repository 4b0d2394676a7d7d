#pragma once

// Subcommand drivers behind the `fgs` executable. Each returns the process
// exit status and writes human output to `out`, diagnostics to `err`.

#include <array>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fgs/certify.hpp"
#include "fgs/error.hpp"
#include "fgs/external_oracle.hpp"
#include "fgs/features.hpp"
#include "fgs/game.hpp"
#include "fgs/image.hpp"
#include "fgs/mcts.hpp"
#include "fgs/netpbm.hpp"
#include "fgs/oracle.hpp"
#include "fgs/saliency.hpp"

namespace fgs {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNotFound = 2;  // attack: none found; certify: UNSAFE
inline constexpr int kExitInconclusive = 3;

inline constexpr std::size_t kDefaultTc1Iterations = 1000;
inline constexpr std::size_t kDefaultTc2Iterations = 100;

struct RunConfig {
  std::string subcommand;
  std::filesystem::path input;
  std::optional<std::filesystem::path> model_file;
  std::optional<std::string> oracle_cmd;
  std::optional<std::string> oracle_tcp;
  Norm norm = Norm::L0;
  double d = 10.0;
  double tau = 1.0;
  ManipulationMode mode = ManipulationMode::Saturate;
  std::optional<std::size_t> target;  // empty: non-targeted
  Player2Role player2 = Player2Role::Cooperative;
  std::optional<std::size_t> tc1_iters;
  std::optional<double> tc1_secs;
  std::optional<std::size_t> tc2_iters;
  std::optional<double> tc2_secs;
  std::optional<double> epsilon;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = ".";
  std::size_t threads = 1;
  std::optional<double> hbar;
  std::optional<double> ell;
  std::vector<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> heatmap;
  std::string dims = "2x2x1";
  double timeout_secs = 30.0;
  std::size_t max_depth = 1000;
  double feature_radius = 2.0;

  GameConfig game_config() const {
    GameConfig g;
    g.norm = norm;
    g.distance_bound = d;
    g.tau = tau;
    g.mode = mode;
    g.goal = target ? Goal::toward(*target) : Goal::non_targeted();
    g.player2_role = player2;
    g.feature_radius_sigmas = feature_radius;
    g.max_depth = max_depth;
    g.validate();
    return g;
  }

  TerminationConditions termination() const {
    TerminationConditions t;
    t.tc1_iterations = tc1_iters;
    t.tc1_seconds = tc1_secs;
    t.tc2_iterations = tc2_iters;
    t.tc2_seconds = tc2_secs;
    if (!t.tc1_iterations && !t.tc1_seconds) t.tc1_iterations = kDefaultTc1Iterations;
    if (!t.tc2_iterations && !t.tc2_seconds) t.tc2_iterations = kDefaultTc2Iterations;
    t.epsilon = epsilon;
    t.validate();
    return t;
  }

  ExternalSpec external_spec() const {
    ExternalSpec s;
    if (oracle_cmd) {
      s.kind = ExternalSpec::Kind::Command;
      s.target = *oracle_cmd;
    } else if (oracle_tcp) {
      s.kind = ExternalSpec::Kind::Tcp;
      s.target = *oracle_tcp;
    } else {
      throw InvalidArgument("an external oracle needs --oracle-cmd or --oracle-tcp");
    }
    if (!(timeout_secs > 0.0)) throw InvalidArgument("--timeout must be > 0");
    s.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_secs * 1000.0));
    return s;
  }
};

// The classifier named by the config; `builtin` is set when it is a weight file.
struct LoadedOracle {
  std::unique_ptr<Oracle> oracle;
  const BuiltInModel* builtin = nullptr;
};

inline LoadedOracle load_oracle(const RunConfig& cfg) {
  const int sources = (cfg.model_file ? 1 : 0) + (cfg.oracle_cmd ? 1 : 0) + (cfg.oracle_tcp ? 1 : 0);
  if (sources != 1) {
    throw InvalidArgument("exactly one of --model, --oracle-cmd, --oracle-tcp is required");
  }
  LoadedOracle lo;
  if (cfg.model_file) {
    auto m = std::make_unique<BuiltInModel>(load_model(*cfg.model_file));
    lo.builtin = m.get();
    lo.oracle = std::move(m);
  } else {
    lo.oracle = connect_external(cfg.external_spec());
  }
  return lo;
}

inline std::array<std::size_t, 3> parse_dims(const std::string& s) {
  std::array<std::size_t, 3> out{};
  const char* p = s.data();
  const char* end = s.data() + s.size();
  for (std::size_t i = 0; i < 3; ++i) {
    auto r = std::from_chars(p, end, out[i]);
    if (r.ec != std::errc() || out[i] == 0) throw InvalidArgument("--dims must look like WxHxC, got '" + s + "'");
    p = r.ptr;
    if (i < 2) {
      if (p == end || *p != 'x') throw InvalidArgument("--dims must look like WxHxC, got '" + s + "'");
      ++p;
    }
  }
  if (p != end) throw InvalidArgument("--dims must look like WxHxC, got '" + s + "'");
  return out;
}

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  return f;
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace detail

inline int cmd_attack(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const Image alpha = load_image(cfg.input);
    const GameConfig game = cfg.game_config();
    const TerminationConditions tcs = cfg.termination();
    LoadedOracle lo = load_oracle(cfg);
    if (game.goal.targeted && game.goal.target >= lo.oracle->class_count()) {
      throw InvalidArgument("--target " + std::to_string(game.goal.target) + " >= class count " +
                            std::to_string(lo.oracle->class_count()));
    }
    const auto keypoints = detect_keypoints(alpha);
    const auto saliency = build_saliency(keypoints, alpha.width(), alpha.height());
    SearchOptions opts;
    opts.seed = cfg.seed;
    opts.threads = cfg.threads;
    const AttackResult res = run_attack(alpha, *lo.oracle, keypoints, saliency, game, tcs, opts);

    detail::ensure_dir(cfg.out_dir);
    {
      auto f = detail::open_out(cfg.out_dir / "trace.csv");
      write_trace_csv(f, res.trace);
    }
    const std::size_t original = lo.oracle->label(alpha);
    std::ostringstream summary;
    summary << "original_label=" << original << '\n';
    summary << "found=" << (res.best_image ? "true" : "false") << '\n';
    if (res.best_image) {
      const auto path = cfg.out_dir / ("adversarial" + image_extension(*res.best_image));
      save_image(*res.best_image, path);
      summary << "adversarial_label=" << lo.oracle->label(*res.best_image) << '\n';
      for (Norm k : {Norm::L0, Norm::L1, Norm::L2, Norm::Linf}) {
        summary << "severity_" << norm_name(k) << '='
                << detail::format_double(distance(*res.best_image, alpha, k)) << '\n';
      }
      summary << "adversarial_image=" << path.string() << '\n';
    }
    summary << "iterations=" << res.iterations_used << '\n';
    summary << "simulations=" << res.simulations << '\n';
    summary << "terminated_by=" << terminated_by_name(res.terminated_by) << '\n';
    summary << "seed=" << cfg.seed << '\n';
    {
      auto f = detail::open_out(cfg.out_dir / "summary.txt");
      f << summary.str();
    }
    out << summary.str();
    return res.best_image ? kExitOk : kExitNotFound;
  });
}

inline int cmd_certify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const Image alpha = load_image(cfg.input);
    const GameConfig game = cfg.game_config();
    LoadedOracle lo = load_oracle(cfg);

    double hbar = 0.0;
    if (cfg.hbar) {
      hbar = *cfg.hbar;
    } else if (lo.builtin) {
      hbar = lipschitz_bound_l1(*lo.builtin);
    } else {
      throw InvalidArgument("--hbar is required with an external oracle");
    }
    double ell = 0.0;
    if (cfg.ell) {
      ell = *cfg.ell;
    } else if (!cfg.dataset.empty()) {
      std::vector<Image> data;
      for (const auto& p : cfg.dataset) data.push_back(load_image(p));
      const GapEstimate est = estimate_confidence_gap(*lo.oracle, data);
      if (est.no_class_change) err << "warning: no class change in --dataset, ell defaults to 1\n";
      ell = est.ell;
    } else {
      throw InvalidArgument("certify needs --ell or --dataset");
    }

    const Certificate cert = certify_safety(alpha, *lo.oracle, game, hbar, ell);
    std::string witness_path = "none";
    if (cert.witness) {
      detail::ensure_dir(cfg.out_dir);
      const auto p = cfg.out_dir / ("witness" + image_extension(*cert.witness));
      save_image(*cert.witness, p);
      witness_path = p.string();
    }
    out << "certificate for " << cfg.input.string() << " (L1 ball of radius "
        << detail::format_double(cfg.d) << ")\n";
    out << "  hbar " << detail::format_double(hbar) << ", ell " << detail::format_double(ell) << '\n';
    out << "  " << cert.rationale << '\n';
    if (cert.witness_severity) {
      out << "  witness at L1 distance " << detail::format_double(*cert.witness_severity) << '\n';
    }
    out << "verdict=" << verdict_name(cert.verdict) << '\n';
    out << "tau_used=" << detail::format_double(cert.tau_used) << '\n';
    out << "tau_max=" << detail::format_double(cert.tau_max) << '\n';
    out << "grid_count=" << cert.grid_count << '\n';
    out << "witness=" << witness_path << '\n';
    switch (cert.verdict) {
      case Verdict::Safe: return kExitOk;
      case Verdict::Unsafe: return kExitNotFound;
      case Verdict::Inconclusive: return kExitInconclusive;
    }
    return kExitError;
  });
}

inline void write_keypoints_csv(std::ostream& f, const std::vector<Keypoint>& kps) {
  f << "x,y,size,response\n";
  for (const auto& k : kps) {
    f << detail::format_double(k.x) << ',' << detail::format_double(k.y) << ','
      << detail::format_double(k.size) << ',' << detail::format_double(k.response) << '\n';
  }
}

inline int cmd_features(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const Image img = load_image(cfg.input);
    const auto kps = detect_keypoints(img);
    detail::ensure_dir(cfg.out_dir);
    {
      auto f = detail::open_out(cfg.out_dir / "keypoints.csv");
      write_keypoints_csv(f, kps);
    }
    if (cfg.heatmap) {
      save_image(saliency_heatmap(build_saliency(kps, img.width(), img.height())), *cfg.heatmap);
    }
    out << kps.size() << " keypoints written to " << (cfg.out_dir / "keypoints.csv").string() << '\n';
    return kExitOk;
  });
}

inline int cmd_oracle_check(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    const auto dims = parse_dims(cfg.dims);
    ExternalOracle oracle(cfg.external_spec());
    const ClassProbs p = oracle.classify(Image(dims[0], dims[1], dims[2], 0.0));
    out << "oracle OK: " << oracle.class_count() << " classes; all-zeros " << cfg.dims
        << " image -> class " << p.argmax() << '\n';
    return kExitOk;
  } catch (const ProtocolError& e) {
    err << "oracle-check failed: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return kExitError;
}

}  // namespace fgs
