#pragma once

// Experiment configuration, dispatch to the pricers, and CSV reporting.
//
// A configuration is a flat text file of key=value lines; '#' starts a
// comment. Recognized keys and defaults are listed in PricingConfig.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gpra/bs_model.hpp"
#include "gpra/bs_run_config.hpp"
#include "gpra/errors.hpp"
#include "gpra/gpr_ei_bs.hpp"
#include "gpra/gpr_tree_bs.hpp"
#include "gpra/rbergomi_pricers.hpp"
#include "gpra/report.hpp"

namespace gpra {

struct PricingConfig {
    std::string model = "bs";       ///< bs | rbergomi
    std::string method = "gpr-ei";  ///< gpr-tree | gpr-ei | crr-benchmark | ekvall-benchmark
    std::string payoff = "geo-put"; ///< geo-put | ari-put | call-max | put
    int d = 2;
    double strike = 100.0;
    double maturity = 1.0;
    double rate = 0.05;
    double spot = 100.0;
    double vol = 0.2;
    std::vector<double> vols;       ///< per-asset vols; overrides `vol` when set
    /// Equicorrelation (bs) or spot/vol correlation (rbergomi); unset means
    /// the model's reference value.
    std::optional<double> rho;
    std::optional<Matrix> corr;     ///< full correlation matrix; overrides `rho` for bs
    int n_steps = 10;               ///< exercise dates, or lattice steps for the benchmarks
    int exercise_stride = 1;        ///< benchmarks: lattice steps between exercise dates, 0 = European
    int p_count = 1000;
    int tree_block = 2;
    int history = 0;
    std::uint64_t seed = 1;
    int halton_skip = kDefaultHaltonSkip;
    double hurst = 0.07;
    double eta = 1.9;
    double xi0 = 0.09;
    int fit_restarts = 5;
    double noise_floor = kSurrogateNoiseFloor;
    std::string output;             ///< CSV destination; the CLI flag takes precedence

    [[nodiscard]] double correlation() const { return rho.value_or(model == "rbergomi" ? RbParams{}.rho : 0.2); }
};

namespace detail {

inline std::string trim(const std::string &s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline double parse_double(const std::string &key, const std::string &value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception &) {
        throw ConfigInvalid("key '" + key + "' expects a number, got '" + value + "'");
    }
}

inline long long parse_integer(const std::string &key, const std::string &value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception &) {
        throw ConfigInvalid("key '" + key + "' expects an integer, got '" + value + "'");
    }
}

inline int parse_int(const std::string &key, const std::string &value) {
    const long long v = parse_integer(key, value);
    if (v < -2147483647LL || v > 2147483647LL) throw ConfigInvalid("key '" + key + "' is out of range");
    return static_cast<int>(v);
}

inline Matrix read_matrix_file(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ConfigInvalid("cannot open correlation file '" + path.string() + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::vector<double> row;
        std::string tok;
        while (ss >> tok) row.push_back(parse_double("corr_file", tok));
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigInvalid("correlation file '" + path.string() + "' is empty");
    const auto n = static_cast<Eigen::Index>(rows.size());
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != n) {
            throw ConfigInvalid("correlation file '" + path.string() + "' is not square");
        }
        for (Eigen::Index j = 0; j < n; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return m;
}

}  // namespace detail

/// Applies one key=value assignment. Relative file paths resolve against
/// `base_dir`.
inline void apply_setting(PricingConfig &cfg, const std::string &key, const std::string &value,
                          const std::filesystem::path &base_dir = {}) {
    using detail::parse_double;
    using detail::parse_int;
    if (key == "model") cfg.model = value;
    else if (key == "method") cfg.method = value;
    else if (key == "payoff") cfg.payoff = value;
    else if (key == "d") cfg.d = parse_int(key, value);
    else if (key == "strike" || key == "K") cfg.strike = parse_double(key, value);
    else if (key == "maturity" || key == "T") cfg.maturity = parse_double(key, value);
    else if (key == "rate" || key == "r") cfg.rate = parse_double(key, value);
    else if (key == "spot" || key == "s0") cfg.spot = parse_double(key, value);
    else if (key == "vol") cfg.vol = parse_double(key, value);
    else if (key == "vols") {
        cfg.vols.clear();
        std::string tok;
        std::istringstream ss(value);
        while (std::getline(ss, tok, ',')) cfg.vols.push_back(parse_double(key, detail::trim(tok)));
    } else if (key == "rho") cfg.rho = parse_double(key, value);
    else if (key == "corr_file") cfg.corr = detail::read_matrix_file(base_dir / value);
    else if (key == "n_steps" || key == "N") cfg.n_steps = parse_int(key, value);
    else if (key == "exercise_stride") cfg.exercise_stride = parse_int(key, value);
    else if (key == "p_count" || key == "P") cfg.p_count = parse_int(key, value);
    else if (key == "tree_block" || key == "m") cfg.tree_block = parse_int(key, value);
    else if (key == "history" || key == "J") cfg.history = parse_int(key, value);
    else if (key == "seed") {
        const long long v = detail::parse_integer(key, value);
        if (v < 0) throw ConfigInvalid("seed must be non-negative");
        cfg.seed = static_cast<std::uint64_t>(v);
    } else if (key == "halton_skip") cfg.halton_skip = parse_int(key, value);
    else if (key == "hurst" || key == "H") cfg.hurst = parse_double(key, value);
    else if (key == "eta") cfg.eta = parse_double(key, value);
    else if (key == "xi0") cfg.xi0 = parse_double(key, value);
    else if (key == "fit_restarts") cfg.fit_restarts = parse_int(key, value);
    else if (key == "noise_floor") cfg.noise_floor = parse_double(key, value);
    else if (key == "out" || key == "output") cfg.output = value;
    else throw ConfigInvalid("unknown key '" + key + "'");
}

/// Parses "key=value" (used for both file lines and command-line overrides).
inline std::pair<std::string, std::string> split_assignment(const std::string &text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigInvalid("expected key=value, got '" + text + "'");
    const std::string key = detail::trim(text.substr(0, eq));
    if (key.empty()) throw ConfigInvalid("empty key in '" + text + "'");
    return {key, detail::trim(text.substr(eq + 1))};
}

inline PricingConfig parse_config(std::istream &in, const std::filesystem::path &base_dir = {}) {
    PricingConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        try {
            const auto [key, value] = split_assignment(line);
            apply_setting(cfg, key, value, base_dir);
        } catch (const ConfigInvalid &e) {
            throw ConfigInvalid("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

inline PricingConfig load_config(const std::filesystem::path &path, const std::vector<std::string> &overrides = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigInvalid("cannot open config file '" + path.string() + "'");
    PricingConfig cfg = parse_config(in, path.parent_path());
    for (const auto &o : overrides) {
        const auto [key, value] = split_assignment(o);
        apply_setting(cfg, key, value, path.parent_path());
    }
    return cfg;
}

inline PayoffKind payoff_kind(const std::string &name) {
    if (name == "geo-put") return PayoffKind::GeometricPut;
    if (name == "ari-put") return PayoffKind::ArithmeticPut;
    if (name == "call-max") return PayoffKind::CallOnMax;
    throw ConfigInvalid("payoff '" + name + "' is not a basket payoff");
}

/// Rejects invalid combinations with a specific message for each.
inline void validate(const PricingConfig &cfg) {
    const bool bs = cfg.model == "bs";
    if (!bs && cfg.model != "rbergomi") throw ConfigInvalid("unknown model '" + cfg.model + "'");
    if (cfg.method != "gpr-tree" && cfg.method != "gpr-ei" && cfg.method != "crr-benchmark" &&
        cfg.method != "ekvall-benchmark") {
        throw ConfigInvalid("unknown method '" + cfg.method + "'");
    }
    if (cfg.payoff != "geo-put" && cfg.payoff != "ari-put" && cfg.payoff != "call-max" && cfg.payoff != "put") {
        throw ConfigInvalid("unknown payoff '" + cfg.payoff + "'");
    }
    if (!(cfg.strike > 0.0)) throw ConfigInvalid("strike must be positive");
    if (!(cfg.maturity > 0.0)) throw ConfigInvalid("maturity must be positive");
    if (!(cfg.spot > 0.0)) throw ConfigInvalid("spot must be positive");
    if (cfg.n_steps < 1) throw ConfigInvalid("n_steps must be at least 1");
    if (cfg.noise_floor <= 0.0) throw ConfigInvalid("noise_floor must be positive");
    if (bs) {
        if (cfg.payoff == "put") throw ConfigInvalid("payoff 'put' is only available for the rbergomi model");
        if (cfg.d < 1) throw ConfigInvalid("d must be at least 1");
        if (!cfg.vols.empty() && static_cast<int>(cfg.vols.size()) != cfg.d) {
            throw ConfigInvalid("vols lists " + std::to_string(cfg.vols.size()) + " values for d=" +
                                std::to_string(cfg.d));
        }
        if (cfg.vols.empty() && !(cfg.vol >= 0.0)) throw ConfigInvalid("vol must be non-negative");
        if (cfg.corr && cfg.corr->rows() != cfg.d) throw ConfigInvalid("correlation file size does not match d");
        const double rho = cfg.correlation();
        if (!cfg.corr && !(rho > -1.0 / std::max(1, cfg.d - 1) - 1e-12 && rho <= 1.0) && cfg.d > 1) {
            throw ConfigInvalid("equicorrelation rho is outside the admissible range for d=" + std::to_string(cfg.d));
        }
        if (cfg.method == "gpr-tree" && cfg.d > kMaxEkvallDim) {
            throw ConfigInvalid("gpr-tree on bs requires d <= " + std::to_string(kMaxEkvallDim));
        }
        if (cfg.method == "ekvall-benchmark" && cfg.d > kMaxEkvallTreeDim) {
            throw ConfigInvalid("ekvall-benchmark requires d <= " + std::to_string(kMaxEkvallTreeDim));
        }
        if (cfg.method == "crr-benchmark" && cfg.payoff != "geo-put") {
            throw ConfigInvalid("crr-benchmark is only available for the geometric put");
        }
        if ((cfg.method == "gpr-tree" || cfg.method == "gpr-ei") && cfg.p_count < 2) {
            throw ConfigInvalid("p_count must give at least 2 cloud points");
        }
        if (cfg.exercise_stride < 0) throw ConfigInvalid("exercise_stride must be non-negative");
        if (cfg.halton_skip < 0) throw ConfigInvalid("halton_skip must be non-negative");
    } else {
        if (cfg.payoff != "put") throw ConfigInvalid("rbergomi supports only payoff 'put'");
        if (cfg.method != "gpr-tree" && cfg.method != "gpr-ei") {
            throw ConfigInvalid("rbergomi supports only methods gpr-tree and gpr-ei");
        }
        if (cfg.p_count < 2) throw ConfigInvalid("p_count must give at least 2 simulated paths");
        if (cfg.history < 0) throw ConfigInvalid("history J must be non-negative");
        if (!(cfg.hurst > 0.0 && cfg.hurst < 1.0)) throw ConfigInvalid("hurst must lie in (0, 1)");
        if (!(cfg.eta > 0.0)) throw ConfigInvalid("eta must be positive");
        if (!(cfg.xi0 > 0.0)) throw ConfigInvalid("xi0 must be positive");
        if (!(std::abs(cfg.correlation()) <= 1.0)) throw ConfigInvalid("rho must lie in [-1, 1]");
        if (cfg.method == "gpr-tree") {
            if (cfg.tree_block < 1 || cfg.tree_block > kMaxQuadrinomialSteps) {
                throw ConfigInvalid("tree_block m must lie in [1, " + std::to_string(kMaxQuadrinomialSteps) + "]");
            }
            if (cfg.n_steps % cfg.tree_block != 0) throw ConfigInvalid("tree_block m must divide n_steps");
        }
    }
}

inline BsParams bs_params(const PricingConfig &cfg) {
    const Vector spot = Vector::Constant(cfg.d, cfg.spot);
    const Vector vols = cfg.vols.empty() ? Vector::Constant(cfg.d, cfg.vol)
                                         : Eigen::Map<const Vector>(cfg.vols.data(), cfg.d).eval();
    try {
        SymMatrix corr = cfg.corr ? SymMatrix(*cfg.corr) : SymMatrix::equicorrelation(cfg.d, cfg.correlation());
        return {spot, cfg.rate, vols, std::move(corr)};
    } catch (const NotPositiveDefinite &e) {
        throw ConfigInvalid(std::string("correlation matrix: ") + e.what());
    } catch (const InvalidArgument &e) {
        throw ConfigInvalid(std::string("model parameters: ") + e.what());
    }
}

/// Runs the configured pricer.
inline PriceReport run(const PricingConfig &cfg) {
    validate(cfg);
    if (cfg.model == "rbergomi") {
        RbParams params{cfg.spot, cfg.rate, cfg.xi0, cfg.eta, cfg.hurst, cfg.correlation()};
        RbPriceConfig rc;
        rc.maturity = cfg.maturity;
        rc.n_steps = cfg.n_steps;
        rc.tree_block = cfg.tree_block;
        rc.p_count = cfg.p_count;
        rc.history = cfg.history;
        rc.seed = cfg.seed;
        rc.strike = cfg.strike;
        rc.fit_restarts = cfg.fit_restarts;
        rc.noise_floor = cfg.noise_floor;
        return cfg.method == "gpr-tree" ? price_rb_gpr_tree(params, rc) : price_rb_gpr_ei(params, rc);
    }
    const BsParams params = bs_params(cfg);
    const Payoff payoff(payoff_kind(cfg.payoff), cfg.strike);
    if (cfg.method == "crr-benchmark" || cfg.method == "ekvall-benchmark") {
        Stopwatch clock;
        PriceReport report;
        report.method = cfg.method;
        if (cfg.method == "crr-benchmark") {
            const GeometricReduction g = geometric_reduction(params);
            report.price = crr_american_price_1d(g.spot, cfg.rate, g.vol, cfg.strike, cfg.maturity, cfg.n_steps,
                                                 OptionType::Put, g.dividend, cfg.exercise_stride);
        } else {
            report.price = ekvall_tree_price(params, payoff, cfg.maturity, cfg.n_steps, cfg.exercise_stride);
        }
        report.seconds = clock.seconds();
        return report;
    }
    BsRunConfig rc;
    rc.maturity = cfg.maturity;
    rc.n_steps = cfg.n_steps;
    rc.p_count = cfg.p_count;
    rc.halton_skip = cfg.halton_skip;
    rc.fit_restarts = cfg.fit_restarts;
    rc.noise_floor = cfg.noise_floor;
    return cfg.method == "gpr-tree" ? price_gpr_tree_bs(params, payoff, rc) : price_gpr_ei_bs(params, payoff, rc);
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char *kCsvHeader = "model,method,payoff,d,K,N,P,m,J,seed,price,seconds";

struct SuiteRow {
    PricingConfig config;
    std::optional<PriceReport> report;
    std::string error;  ///< empty on success
    bool config_error = false;
};

namespace detail {

inline std::string fixed(double v, int digits) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << v;
    return ss.str();
}

inline std::string csv_escape(const std::string &s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

}  // namespace detail

/// Formats rows as CSV. An `error` column is appended only when some row
/// failed; successful rows leave it empty.
inline std::string format_csv(const std::vector<SuiteRow> &rows) {
    const bool any_error = std::any_of(rows.begin(), rows.end(), [](const SuiteRow &r) { return !r.error.empty(); });
    std::ostringstream out;
    out << kCsvHeader << (any_error ? ",error" : "") << '\n';
    for (const auto &row : rows) {
        const PricingConfig &c = row.config;
        out << c.model << ',' << c.method << ',' << c.payoff << ',' << (c.model == "rbergomi" ? 1 : c.d) << ','
            << detail::fixed(c.strike, 4) << ',' << c.n_steps << ',' << c.p_count << ',' << c.tree_block << ','
            << c.history << ',' << c.seed << ',';
        if (row.report) {
            out << detail::fixed(row.report->price, 4) << ',' << detail::fixed(row.report->seconds, 1);
        } else {
            out << ',';
        }
        if (any_error) out << ',' << detail::csv_escape(row.error);
        out << '\n';
    }
    return out.str();
}

/// Runs every config `repeat` times in input order. Failures are recorded
/// per row and do not stop the suite.
inline std::vector<SuiteRow> run_suite(const std::vector<PricingConfig> &configs, int repeat = 1) {
    if (configs.empty()) throw ConfigInvalid("suite has no configurations");
    if (repeat < 1) throw ConfigInvalid("repeat must be at least 1");
    std::vector<SuiteRow> rows;
    for (const auto &cfg : configs) {
        for (int r = 0; r < repeat; ++r) {
            SuiteRow row;
            row.config = cfg;
            try {
                row.report = run(cfg);
            } catch (const ConfigInvalid &e) {
                row.error = e.what();
                row.config_error = true;
            } catch (const std::exception &e) {
                row.error = e.what();
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace gpra
