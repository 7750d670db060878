// polywalk: batch front end for parameter construction, simulation, estimation and verification.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "polywalk/drw.hpp"
#include "polywalk/params.hpp"
#include "polywalk/suites.hpp"
#include "polywalk/verify.hpp"
#include "polywalk/walks.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace polywalk;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

struct RunConfig {
    std::string command;
    std::string law;
    std::string params_file;
    int dim = 0;  // 0: 2 for drw, else 1
    std::vector<std::uint64_t> n_grid;
    std::uint64_t replicas = 10'000;
    std::uint64_t seed = 1;
    unsigned workers = 0;
    double confidence = kDefaultConfidence;
    std::string out_dir = "polywalk-out";
    std::string suite = "lemmas";
    int k_max = 5;
    double A = 0;  // 0: compute_A
    std::string model = "lattice";
    std::string event = "return";
    std::string step = "lazy";
    double level = 1.0;
    double box_half = 1.0;
    std::uint64_t length = 100;
    std::size_t phases = 50;
    std::string rule = "full";
};

/// Config fields that determine the outputs; the worker count is deliberately absent.
ordered_json config_echo(const RunConfig& c) {
    ordered_json j;
    j["command"] = c.command;
    j["seed"] = c.seed;
    if (!c.law.empty()) j["law"] = c.law;
    if (!c.params_file.empty()) j["params_file"] = c.params_file;
    j["dim"] = c.dim;
    j["n_grid"] = c.n_grid;
    j["replicas"] = c.replicas;
    j["confidence"] = c.confidence;
    if (c.command == "verify") j["suite"] = c.suite;
    if (c.command == "construct-params") {
        j["k_max"] = c.k_max;
        j["A"] = c.A;
    }
    if (c.command == "simulate") {
        j["model"] = c.model;
        j["length"] = c.length;
        j["phases"] = c.phases;
        j["rule"] = c.rule;
    }
    if (c.command == "estimate") {
        j["event"] = c.event;
        j["step"] = c.step;
        j["level"] = c.level;
        j["box_half"] = c.box_half;
    }
    return j;
}

std::string sha256_hex(const std::string& data) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

/// Collects output files; writes them and the manifest at the end.
class OutputSet {
public:
    explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

    void add(const std::string& name, std::string content) { files_[name] = std::move(content); }

    void write(const RunConfig& cfg, const ordered_json& checks, double wall_seconds, unsigned workers) const {
        fs::create_directories(dir_);
        ordered_json digests = ordered_json::object();
        for (const auto& [name, content] : files_) {
            std::ofstream(dir_ / name, std::ios::binary) << content;
            digests[name] = sha256_hex(content);
        }
        ordered_json m;
        m["artifact"] = "polywalk";
        m["version"] = kVersion;
        m["config"] = config_echo(cfg);
        m["checks"] = checks;
        m["outputs"] = digests;
        std::ofstream(dir_ / "manifest.json", std::ios::binary) << m.dump(2) << '\n';
        std::ofstream log(dir_ / "run.log");
        log << "command=" << cfg.command << "\nworkers=" << workers << "\nwall_seconds=" << wall_seconds << '\n';
    }

private:
    fs::path dir_;
    std::map<std::string, std::string> files_;
};

std::vector<std::uint64_t> parse_grid(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != item.size()) fail(Errc::parse_error, "--n-grid: '" + item + "' is not a non-negative integer");
        out.push_back(v);
    }
    for (std::size_t i = 1; i < out.size(); ++i)
        require(out[i] > out[i - 1], Errc::parse_error, "--n-grid must be strictly increasing");
    return out;
}

std::vector<std::uint64_t> geometric_grid(std::uint64_t lo, std::uint64_t hi) {
    std::vector<std::uint64_t> g;
    for (std::uint64_t n = lo; n <= hi; n *= 2) g.push_back(n);
    return g;
}

WaitingTimeLaw load_law(const RunConfig& cfg, std::size_t default_k = 2) {
    if (!cfg.law.empty()) return WaitingTimeLaw::parse(cfg.law);
    if (!cfg.params_file.empty()) {
        std::ifstream in(cfg.params_file);
        require(in.good(), Errc::parse_error, "cannot open params file '" + cfg.params_file + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            fail(Errc::parse_error, cfg.params_file + ": " + e.what());
        }
        return params_from_json(j).waiting_law(default_k);
    }
    fail(Errc::parse_error, "a law is required (--law or --params-file)");
}

struct CommandResult {
    ordered_json checks = ordered_json::array();
    bool ok = true;
};

void record(CommandResult& res, const CheckReport& rep) {
    for (const auto& r : rep.rows) {
        res.checks.push_back({{"check", r.check}, {"params", r.params}, {"holds", r.holds}});
        res.ok = res.ok && r.holds;
    }
}

// construct-params ---------------------------------------------------------------------------

CommandResult cmd_construct_params(const RunConfig& cfg, OutputSet& out) {
    require(cfg.k_max >= 2, Errc::parse_error, "--k-max must be at least 2");
    const double A = cfg.A > 0 ? cfg.A : compute_A().A;
    const auto hp = construct_params(A, cfg.k_max);
    const auto report = validate_params(hp);
    out.add("params.json", to_json(hp).dump(2) + "\n");

    const auto j = to_json(hp);
    std::ostringstream levels;
    levels << "k,log10_p,log10_c,log10_y\n";
    for (const auto& lv : j["levels"])
        levels << lv["k"] << ',' << lv["p"]["log10"] << ',' << lv["log10_c"] << ',' << lv["log10_y"] << '\n';
    out.add("levels.csv", levels.str());

    const auto rep = params_report(report);
    out.add("constraints.csv", rep.to_csv());
    std::cout << std::left << std::setw(6) << "k" << std::setw(14) << "constraint" << std::setw(8) << "exact"
              << std::setw(8) << "holds" << "slack\n";
    for (const auto& c : report.checks)
        std::cout << std::setw(6) << c.k << std::setw(14) << c.constraint << std::setw(8) << (c.exact ? "yes" : "no")
                  << std::setw(8) << (c.holds ? "yes" : "no") << c.slack << '\n';
    CommandResult res;
    record(res, rep);
    return res;
}

// simulate -----------------------------------------------------------------------------------

CommandResult cmd_simulate(const RunConfig& cfg, OutputSet& out, unsigned workers) {
    require(cfg.replicas >= 1 && cfg.replicas <= 10'000, Errc::parse_error, "simulate takes 1..10000 replicas");
    std::vector<std::string> chunks(cfg.replicas);
    const auto base = [&](std::uint64_t r) {
        return derive_stream(cfg.seed, CommandId::simulate, static_cast<std::uint32_t>(r));
    };

    if (cfg.model == "drw") {
        DRWConfig dc;
        dc.d = cfg.dim;
        if (!cfg.law.empty() || !cfg.params_file.empty()) dc.law = load_law(cfg);
        dc.rule = cfg.rule == "perpendicular" ? TurnRule::perpendicular : TurnRule::full;
        require(cfg.rule == "full" || cfg.rule == "perpendicular", Errc::parse_error, "--rule: full|perpendicular");
        dc.phases = cfg.phases;
        run_replicas(cfg.replicas, workers, CountTally(), [&](std::uint64_t r, CountTally&) {
            auto rng = base(r);
            chunks[r] = trace_to_csv(simulate_drw(dc, rng));
        });
        for (std::uint64_t r = 0; r < cfg.replicas; ++r) out.add("trace_" + std::to_string(r) + ".csv", chunks[r]);
        return {};
    }

    require(cfg.model == "lattice" || cfg.model == "waiting", Errc::parse_error, "--model: lattice|waiting|drw");
    std::optional<WaitingTimeLaw> law;
    if (cfg.model == "waiting") law = load_law(cfg);
    require(law || (cfg.law.empty() && cfg.params_file.empty()), Errc::parse_error,
            "--law and --params-file need --model waiting or drw");
    const FloatPMF step = cfg.step == "simple" ? simple_step_law<double>() : lazy_step_law<double>();
    std::vector<std::string> events(cfg.replicas);
    const Box box = Box::cube(cfg.dim, cfg.box_half);
    run_replicas(cfg.replicas, workers, CountTally(), [&](std::uint64_t r, CountTally&) {
        const auto rng = base(r);
        const auto path = law ? simulate_walk(cfg.dim, *law, std::nullopt, cfg.length, rng)
                              : simulate_lattice_walk(cfg.dim, step, cfg.length, rng);
        std::ostringstream os;
        const auto csv = path_to_csv(path);
        std::istringstream lines(csv);
        std::string line;
        std::getline(lines, line);  // header
        while (std::getline(lines, line)) os << r << ',' << line << '\n';
        chunks[r] = os.str();
        std::vector<EventRecord> ev = detect_returns(path);
        const auto add = [&](std::vector<EventRecord> more) { ev.insert(ev.end(), more.begin(), more.end()); };
        add(detect_sign_change(path, 0));
        add(detect_level_crossing(path, 0, cfg.level));
        add(detect_segment_hits(path, box));
        if (cfg.dim == 2) add(detect_Vn(path));
        std::ostringstream es;
        const auto ecsv = events_to_csv(ev);
        std::istringstream elines(ecsv);
        std::getline(elines, line);
        while (std::getline(elines, line)) es << r << ',' << line << '\n';
        events[r] = es.str();
    });
    std::string paths = "replica,n";
    for (int c = 0; c < cfg.dim; ++c) paths += ",x" + std::to_string(c);
    paths += '\n';
    std::string ev = "replica,kind,n,coord,payload\n";
    for (std::uint64_t r = 0; r < cfg.replicas; ++r) {
        paths += chunks[r];
        ev += events[r];
    }
    out.add("paths.csv", paths);
    out.add("events.csv", ev);
    return {};
}

// estimate -----------------------------------------------------------------------------------

CommandResult cmd_estimate(const RunConfig& cfg, OutputSet& out, unsigned workers) {
    require(cfg.replicas >= 100, Errc::parse_error, "estimate needs at least 100 replicas");
    EventSpec spec;
    spec.kind = parse_estimate_event(cfg.event);
    spec.dim = cfg.dim;
    require(cfg.dim >= 1 && cfg.dim <= 8, Errc::parse_error, "--dim must lie in 1..8");
    if (!cfg.law.empty() || !cfg.params_file.empty()) {
        spec.step = law_of_X(as_pmf<double>(load_law(cfg)), 20).law;
    } else {
        require(cfg.step == "lazy" || cfg.step == "simple", Errc::parse_error, "--step: lazy|simple");
        spec.step = cfg.step == "simple" ? simple_step_law<double>() : lazy_step_law<double>();
    }
    spec.level = cfg.level;
    spec.box_half = cfg.box_half;
    const auto grid = cfg.n_grid.empty() ? geometric_grid(16, 1024) : cfg.n_grid;

    std::ostringstream csv;
    csv << "n,point,ci_lo,ci_hi,successes,replicas,seed,log_n,log_p,exact\n";
    std::vector<FitPoint> pts;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const StreamPlan plan{cfg.seed, CommandId::estimate, static_cast<std::uint16_t>(i), workers};
        const auto e = estimate_event_prob(spec, grid[i], cfg.replicas, plan, cfg.confidence);
        const auto exact = exact_event_prob(spec, grid[i]);
        csv << grid[i] << ',' << fmt(e.point) << ',' << fmt(e.ci_lo) << ',' << fmt(e.ci_hi) << ',' << e.successes << ','
            << e.replicas << ',' << cfg.seed << ',' << fmt(std::log(static_cast<double>(grid[i]))) << ','
            << (e.point > 0 ? fmt(std::log(e.point)) : "") << ',' << (exact ? fmt(*exact) : "") << '\n';
        pts.push_back({static_cast<double>(grid[i]), e.point, e.ci_lo, e.ci_hi});
    }
    out.add("estimates.csv", csv.str());

    ordered_json fit;
    fit["seed"] = cfg.seed;
    fit["replicas"] = cfg.replicas;
    fit["event"] = cfg.event;
    fit["dim"] = cfg.dim;
    try {
        const auto f = fit_exponent(pts, cfg.confidence);
        fit["slope"] = f.slope;
        fit["slope_ci"] = {f.slope_lo, f.slope_hi};
        fit["intercept"] = f.intercept;
        fit["points_used"] = f.used;
        fit["excluded_n"] = f.excluded_n;
        for (double n : f.excluded_n) std::cerr << "warning: n=" << n << " has zero estimate, excluded from fit\n";
    } catch (const Error& e) {
        fit["slope"] = nullptr;
        fit["fit_error"] = e.what();
    }
    out.add("fit.json", fit.dump(2) + "\n");
    return {};
}

// verify -------------------------------------------------------------------------------------

CommandResult cmd_verify(const RunConfig& cfg, OutputSet& out, unsigned workers) {
    static const std::vector<std::string> suites{"lemmas", "momest",   "unimod", "unimodest", "maxest",
                                                 "recurrevents", "qkn2", "quantile", "logseries", "all"};
    require(std::find(suites.begin(), suites.end(), cfg.suite) != suites.end(), Errc::parse_error,
            "unknown suite '" + cfg.suite + "'");
    const auto want = [&](const std::string& s) {
        if (cfg.suite == "all" || cfg.suite == s) return true;
        return cfg.suite == "lemmas" && (s == "momest" || s == "unimod" || s == "unimodest" || s == "maxest" ||
                                         s == "recurrevents");
    };
    LemmaSuiteConfig lc;
    lc.seed = cfg.seed;
    CheckReport rep;
    if (want("momest")) rep.append(run_momest_suite(lc));
    if (want("unimod")) rep.append(run_unimod_suite(lc));
    if (want("unimodest")) rep.append(run_unimodest_suite(lc));
    if (want("maxest")) rep.append(run_maxest_suite(lc));
    if (want("recurrevents")) rep.append(run_recurrevents_suite(lc));
    if (want("logseries")) {
        for (double q : {0.5, 0.1, 0.01}) {
            const double v = log_series(q);
            const double err = std::abs(v - std::log(1.0 / q));
            rep.add({"logseries", "q=" + fmt(q), fmt(v), fmt(std::log(1.0 / q)), fmt(kLogSeriesTolerance - err),
                     err <= kLogSeriesTolerance});
        }
    }
    if (want("quantile")) {
        // default: symmetric law on {+-1, +-5} without mass at 0
        const auto law = cfg.law.empty()
                             ? FloatPMF::from_weights(-5, {0.15, 0, 0, 0, 0.35, 0, 0.35, 0, 0, 0, 0.15})
                             : law_of_X(as_pmf<double>(WaitingTimeLaw::parse(cfg.law)), 20).law;
        const std::uint64_t reps = cfg.replicas;
        for (double alpha : {0.5, 0.9}) {
            const auto grid = cfg.n_grid.empty() ? std::vector<std::uint64_t>{64} : cfg.n_grid;
            for (std::size_t i = 0; i < grid.size(); ++i) {
                const StreamPlan plan{cfg.seed, CommandId::verify, static_cast<std::uint16_t>(100 + i), workers};
                const auto r = check_quantile_bound(law, alpha, grid[i], reps, plan, cfg.confidence);
                rep.add({"quantile", "alpha=" + fmt(alpha) + " n=" + std::to_string(grid[i]) +
                                         " gamma=" + std::to_string(r.gamma) + " replicas=" + std::to_string(reps),
                         fmt(r.lhs.ci_hi), fmt(r.rhs_lo), fmt(r.lhs.ci_hi - r.rhs_lo), r.holds});
            }
        }
    }
    if (want("qkn2")) {
        const auto law = cfg.law.empty() ? WaitingTimeLaw::parse("3/4:1,1/4:16") : WaitingTimeLaw::parse(cfg.law);
        const double A = cfg.A > 0 ? cfg.A : compute_A().A;
        const auto grid = cfg.n_grid.empty() ? std::vector<std::uint64_t>{16, 64, 256} : cfg.n_grid;
        const StreamPlan plan{cfg.seed, CommandId::verify, 200, workers};
        const auto rows = check_qkn2(law, A, grid, cfg.replicas, plan, cfg.confidence);
        rep.append(qkn2_report(law, A, rows));
    }
    out.add("report.csv", rep.to_csv());
    ordered_json summary;
    summary["seed"] = cfg.seed;
    summary["replicas"] = cfg.replicas;
    summary["suite"] = cfg.suite;
    summary["checks"] = rep.rows.size();
    summary["failures"] = rep.failures();
    out.add("summary.json", summary.dump(2) + "\n");
    CommandResult res;
    record(res, rep);
    std::cout << rep.rows.size() << " checks, " << rep.failures() << " failures\n";
    for (const auto& r : rep.rows)
        if (!r.holds) std::cout << "FAIL " << r.check << " " << r.params << '\n';
    return res;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"polywalk: random walk simulation and verification"};
    RunConfig cfg;
    std::string grid_text;
    app.add_option("--command", cfg.command, "construct-params | simulate | estimate | verify")
        ->required()
        ->check(CLI::IsMember({"construct-params", "simulate", "estimate", "verify"}));
    app.add_option("--law", cfg.law, "waiting law p:y,p:y,... (p rational)");
    app.add_option("--params-file", cfg.params_file, "hierarchy parameter file");
    app.add_option("--dim", cfg.dim, "dimension (default 2 for drw, else 1)");
    app.add_option("--n-grid", grid_text, "comma-separated step counts, strictly increasing");
    app.add_option("--replicas", cfg.replicas, "replicas per grid point")->check(CLI::PositiveNumber);
    app.add_option("--seed", cfg.seed, "master seed");
    app.add_option("--workers", cfg.workers, std::string("worker threads (default $") + kWorkersEnv + ")");
    app.add_option("--confidence", cfg.confidence, "Wilson interval confidence")->check(CLI::Range(0.5, 0.999999));
    app.add_option("--out-dir", cfg.out_dir, "output directory");
    app.add_option("--suite", cfg.suite, "verify suite");
    app.add_option("--k-max", cfg.k_max, "construct-params: top level");
    app.add_option("--A", cfg.A, "construct-params/qkn2: constant A (default compute_A)");
    app.add_option("--model", cfg.model, "simulate: lattice | waiting | drw");
    app.add_option("--event", cfg.event, "estimate: return | sign_change | level_crossing | interval_hit | box_visit | V_n | segment_hit");
    app.add_option("--step", cfg.step, "lattice step law: lazy | simple");
    app.add_option("--level", cfg.level, "level for level crossings");
    app.add_option("--box-half", cfg.box_half, "half width of the box [-h,h]^d");
    app.add_option("--length", cfg.length, "simulate: path length");
    app.add_option("--phases", cfg.phases, "simulate drw: number of phases");
    app.add_option("--rule", cfg.rule, "simulate drw: full | perpendicular");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        cfg.n_grid = parse_grid(grid_text);
        if (cfg.dim == 0) cfg.dim = cfg.model == "drw" ? 2 : 1;
        const unsigned workers = cfg.workers > 0 ? cfg.workers : default_workers();
        const auto t0 = std::chrono::steady_clock::now();
        OutputSet out(cfg.out_dir);
        CommandResult res;
        if (cfg.command == "construct-params") res = cmd_construct_params(cfg, out);
        if (cfg.command == "simulate") res = cmd_simulate(cfg, out, workers);
        if (cfg.command == "estimate") res = cmd_estimate(cfg, out, workers);
        if (cfg.command == "verify") res = cmd_verify(cfg, out, workers);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.write(cfg, res.checks, wall, workers);
        return res.ok ? kExitOk : kExitCheckFailed;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        const bool config = e.code() == Errc::parse_error || e.code() == Errc::invalid_mixture ||
                            e.code() == Errc::invalid_interval || e.code() == Errc::precondition_violation ||
                            e.code() == Errc::sampling_range || e.code() == Errc::dimension_mismatch ||
                            e.code() == Errc::degenerate_input;
        return config ? kExitUsage : kExitCheckFailed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}
