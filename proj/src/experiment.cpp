#include "sparsetomo/experiment.hpp"
#include "sparsetomo/errors.hpp"
#include "sparsetomo/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

namespace sparsetomo {

namespace {

using json = nlohmann::json;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, mode);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

double regression_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

std::vector<int> dictionary_scales(const ForwardModel& model) {
    std::vector<int> out(model.dictionary_size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = model.scale_of(i);
    return out;
}

double fitted_decay(const Vector& x, const std::vector<int>& scales, int j_max) {
    const std::vector<double> tails = tail_norms(x, scales, j_max);
    std::vector<double> js, ys;
    for (std::size_t j = 0; j < tails.size(); ++j)
        if (tails[j] > 0.0) {
            js.push_back(static_cast<double>(j));
            ys.push_back(std::log2(tails[j]));
        }
    return js.size() >= 2 ? -regression_slope(js, ys) : 0.0;
}

double bump(double x, double y, double cx, double cy, double r) {
    const double q = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (r * r);
    return q < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - q)) : 0.0;
}

WeightVector model_weights(const ForwardModel& model, std::span<const std::size_t> lambda) {
    if (const auto* leg = dynamic_cast<const LegendreModel*>(&model)) {
        const WeightVector all = leg->sup_weights();
        std::vector<double> w;
        for (auto i : lambda) w.push_back(all[i]);
        return WeightVector(std::move(w));
    }
    return WeightVector::ones(lambda.size());
}

template <class T>
std::vector<T> scalar_or_list(const json& v) {
    if (v.is_array()) return v.get<std::vector<T>>();
    return {v.get<T>()};
}

} // namespace

// ---------------------------------------------------------------------------------------------------------
// Phantoms

PhantomKind phantom_kind_from_string(const std::string& name) {
    if (name == "sparse") return PhantomKind::sparse;
    if (name == "cartoon") return PhantomKind::cartoon;
    if (name == "tail") return PhantomKind::tail;
    throw ConfigurationError("unknown phantom kind: " + name);
}

std::string to_string(PhantomKind kind) {
    switch (kind) {
    case PhantomKind::sparse: return "sparse";
    case PhantomKind::cartoon: return "cartoon";
    case PhantomKind::tail: return "tail";
    }
    return "unknown";
}

std::vector<double> tail_norms(const Vector& x, std::span<const int> scales, int j_max) {
    if (static_cast<std::size_t>(x.size()) != scales.size()) throw DimensionError("one scale per coefficient required");
    std::vector<double> energy(static_cast<std::size_t>(std::max(j_max, 0) + 1), 0.0);
    for (std::size_t i = 0; i < scales.size(); ++i) {
        if (scales[i] < 0 || scales[i] > j_max) throw RangeError("coefficient scale outside [0, j_max]");
        energy[static_cast<std::size_t>(scales[i])] += x[static_cast<Eigen::Index>(i)] * x[static_cast<Eigen::Index>(i)];
    }
    std::vector<double> out(static_cast<std::size_t>(std::max(j_max, 0)), 0.0);
    double acc = 0.0;
    for (int j = j_max; j >= 1; --j) {
        acc += energy[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(j - 1)] = std::sqrt(acc);
    }
    return out;
}

Image cartoon_image(const GridSpec& grid, std::uint64_t seed) {
    Rng rng(seed);
    auto jitter = [&] { return rng.uniform(-0.04, 0.04); };
    const double b1x = -0.35 + jitter(), b1y = 0.30 + jitter();
    const double b2x = 0.32 + jitter(), b2y = 0.33 + jitter();
    const double ex = 0.05 + jitter(), ey = -0.30 + jitter();
    const double ea = 0.50, eb = 0.28, rot = 0.5;
    const double c = std::cos(rot), s = std::sin(rot);
    Image u = Image::zeros(grid);
    for (int i = 0; i < grid.size; ++i)
        for (int k = 0; k < grid.size; ++k) {
            const double x = grid.node(i), y = grid.node(k);
            double v = bump(x, y, b1x, b1y, 0.35) + 0.7 * bump(x, y, b2x, b2y, 0.25);
            const double dx = x - ex, dy = y - ey;
            const double px = c * dx + s * dy, py = -s * dx + c * dy;
            if ((px * px) / (ea * ea) + (py * py) / (eb * eb) <= 1.0) v += 1.0;
            u.values(i, k) = v;
        }
    return u;
}

Phantom make_phantom(const PhantomSpec& spec, const ForwardModel& model, const DictionaryAtlas* atlas) {
    Phantom ph;
    const std::size_t n = model.dictionary_size();
    const std::vector<int> scales = dictionary_scales(model);
    ph.coefficients = Vector::Zero(static_cast<Eigen::Index>(n));
    Rng rng(spec.seed);
    switch (spec.kind) {
    case PhantomKind::sparse: {
        const std::vector<std::size_t> lambda = model_truncation(model, spec.j0);
        if (spec.s > lambda.size()) throw CapacityError("sparsity exceeds the truncation set");
        std::vector<std::size_t> pool = lambda;
        for (std::size_t k = 0; k < spec.s; ++k) {
            const std::size_t pick = k + static_cast<std::size_t>(rng.below(pool.size() - k));
            std::swap(pool[k], pool[pick]);
            ph.coefficients[static_cast<Eigen::Index>(pool[k])] = rng.sign();
        }
        ph.s = spec.s;
        break;
    }
    case PhantomKind::tail: {
        if (!atlas) throw ConfigurationError("tail phantoms need a wavelet atlas");
        if (!(spec.a > 0.0)) throw DomainError("tail decay must be positive");
        const int jm = atlas->j_max();
        // Per-scale energies chosen so that the finite tails follow amplitude² 2^{-2aj} exactly; the finest
        // scale carries the energy of every scale beyond it.
        auto tail2 = [&](int j) { return spec.amplitude * spec.amplitude * std::exp2(-2.0 * spec.a * j); };
        std::vector<double> energy(static_cast<std::size_t>(jm + 1));
        energy[0] = tail2(0);
        for (int j = 1; j < jm; ++j) energy[static_cast<std::size_t>(j)] = tail2(j - 1) - tail2(j);
        if (jm >= 1) energy[static_cast<std::size_t>(jm)] = tail2(jm - 1);
        for (std::size_t i = 0; i < n; ++i) {
            const int j = scales[i];
            const double mag = std::sqrt(energy[static_cast<std::size_t>(j)] /
                                         static_cast<double>(atlas->count_at_scale(j)));
            ph.coefficients[static_cast<Eigen::Index>(i)] = mag * rng.sign();
        }
        ph.s = n;
        ph.a_effective = jm >= 2 ? fitted_decay(ph.coefficients, scales, jm) : spec.a;
        break;
    }
    case PhantomKind::cartoon: {
        if (!atlas) throw ConfigurationError("cartoon phantoms need a wavelet atlas");
        ph.coefficients = atlas->analysis(cartoon_image(atlas->grid(), spec.seed));
        ph.s = static_cast<std::size_t>((ph.coefficients.array() != 0.0).count());
        ph.a_effective = fitted_decay(ph.coefficients, scales, atlas->j_max());
        break;
    }
    }
    if (atlas) ph.image = atlas->synthesis(ph.coefficients);
    return ph;
}

// ---------------------------------------------------------------------------------------------------------
// Configuration

MRule m_rule_from_string(const std::string& name) {
    if (name == "fixed") return MRule::fixed;
    if (name == "sparse") return MRule::sparse;
    if (name == "noise") return MRule::noise;
    if (name == "cartoon") return MRule::cartoon;
    throw ConfigurationError("unknown m rule: " + name);
}

std::string to_string(MRule rule) {
    switch (rule) {
    case MRule::fixed: return "fixed";
    case MRule::sparse: return "sparse";
    case MRule::noise: return "noise";
    case MRule::cartoon: return "cartoon";
    }
    return "unknown";
}

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigurationError(std::string("invalid JSON config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigurationError("config must be a JSON object");
    ExperimentConfig cfg;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "model") cfg.model = v.get<std::string>();
            else if (key == "wavelet_order") cfg.wavelet_order = v.get<int>();
            else if (key == "j0") cfg.j0 = cfg.phantom.j0 = v.get<int>();
            else if (key == "jmax" || key == "j_max") cfg.j_max = v.get<int>();
            else if (key == "s") cfg.phantom.s = v.get<std::size_t>();
            else if (key == "m") cfg.ms = scalar_or_list<std::size_t>(v);
            else if (key == "beta") cfg.betas = scalar_or_list<double>(v);
            else if (key == "zeta") cfg.zeta = v.get<double>();
            else if (key == "gamma") cfg.gamma = v.get<double>();
            else if (key == "seed") cfg.seeds = scalar_or_list<std::uint64_t>(v);
            else if (key == "out") cfg.out = v.get<std::string>();
            else if (key == "phantom") cfg.phantom.kind = phantom_kind_from_string(v.get<std::string>());
            else if (key == "a") cfg.phantom.a = v.get<double>();
            else if (key == "amplitude") cfg.phantom.amplitude = v.get<double>();
            else if (key == "phantom_seed") cfg.phantom.seed = v.get<std::uint64_t>();
            else if (key == "ds_factor") cfg.ds_factor = v.get<double>();
            else if (key == "m_rule") cfg.m_rule = m_rule_from_string(v.get<std::string>());
            else if (key == "j0_rule") cfg.j0_rule = v.get<bool>();
            else if (key == "j0_cap") cfg.j0_cap = v.get<int>();
            else if (key == "m_cap") cfg.m_cap = v.get<std::size_t>();
            else if (key == "c0") cfg.c0 = v.get<double>();
            else if (key == "calibrate") cfg.calibrate = v.get<bool>();
            else if (key == "pilot_j0") cfg.pilot_j0 = v.get<int>();
            else if (key == "pilot_seeds") cfg.pilot_seeds = v.get<std::size_t>();
            else if (key == "p") cfg.p = v.get<double>();
            else if (key == "b") cfg.b = v.get<double>();
            else if (key == "legendre_degree") cfg.legendre_degree = v.get<std::size_t>();
            else if (key == "lambda") cfg.lambdas = scalar_or_list<double>(v);
            else if (key == "rip_trials") cfg.rip_trials = v.get<std::size_t>();
            else if (key == "max_iters") cfg.max_iters = v.get<int>();
            else if (key == "tol_gap") cfg.tol_gap = v.get<double>();
            else throw ConfigurationError("unknown config key: " + key);
        }
    } catch (const json::exception& e) {
        throw ConfigurationError(std::string("config value has the wrong type: ") + e.what());
    }
    return cfg;
}

ExperimentConfig config_from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json_text(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["model"] = cfg.model;
    j["wavelet_order"] = cfg.wavelet_order;
    j["j0"] = cfg.j0;
    j["jmax"] = cfg.j_max;
    j["s"] = cfg.phantom.s;
    j["m"] = cfg.ms;
    j["beta"] = cfg.betas;
    j["zeta"] = cfg.zeta;
    j["gamma"] = cfg.gamma;
    j["seed"] = cfg.seeds;
    j["out"] = cfg.out.string();
    j["phantom"] = to_string(cfg.phantom.kind);
    j["a"] = cfg.phantom.a;
    j["amplitude"] = cfg.phantom.amplitude;
    j["phantom_seed"] = cfg.phantom.seed;
    j["ds_factor"] = cfg.ds_factor;
    j["m_rule"] = to_string(cfg.m_rule);
    j["j0_rule"] = cfg.j0_rule;
    j["j0_cap"] = cfg.j0_cap;
    j["m_cap"] = cfg.m_cap;
    j["c0"] = cfg.c0;
    j["calibrate"] = cfg.calibrate;
    j["pilot_j0"] = cfg.pilot_j0;
    j["pilot_seeds"] = cfg.pilot_seeds;
    j["p"] = cfg.p;
    j["b"] = cfg.b;
    j["legendre_degree"] = cfg.legendre_degree;
    j["lambda"] = cfg.lambdas;
    j["rip_trials"] = cfg.rip_trials;
    j["max_iters"] = cfg.max_iters;
    j["tol_gap"] = cfg.tol_gap;
    return j.dump(2);
}

void validate(const ExperimentConfig& cfg) {
    if (!cfg.j0_rule && (cfg.j0 < 0 || cfg.j0 > cfg.j_max)) throw ConfigurationError("j0 must lie in [0, jmax]");
    if (cfg.j_max > 5) throw ConfigurationError("jmax is capped at 5");
    if (cfg.j0_cap > 4) throw ConfigurationError("j0 is capped at 4");
    for (double b : cfg.betas)
        if (!(b >= 0.0 && b < 1.0)) throw ConfigurationError("beta values must lie in [0, 1)");
    for (auto m : cfg.ms)
        if (m < 1) throw ConfigurationError("m values must be at least 1");
    if (cfg.m_cap < 1 || cfg.m_cap > 4096) throw ConfigurationError("m_cap must lie in [1, 4096]");
    if (cfg.seeds.empty()) throw ConfigurationError("at least one seed is required");
    if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) throw ConfigurationError("gamma must lie in (0, 1)");
    if (!(cfg.ds_factor > 0.0)) throw ConfigurationError("ds_factor must be positive");
}

ModelBundle make_model(const ExperimentConfig& cfg) {
    ModelBundle out;
    const WaveletFilter filter = build_filter(cfg.wavelet_order);
    if (cfg.model == "radon" || cfg.model == "fanbeam") {
        auto atlas = std::make_shared<const DictionaryAtlas>(DictionaryAtlas::build(filter, cfg.j_max));
        out.atlas = atlas;
        const double h = atlas->grid().h;
        if (cfg.model == "radon") {
            out.model = std::make_shared<const RadonModel>(atlas, cfg.ds_factor * h);
        } else {
            const FanBeamModel probe(atlas);
            out.model = std::make_shared<const FanBeamModel>(atlas, probe.rho(), probe.d(),
                                                             cfg.ds_factor * probe.dalpha());
        }
    } else if (cfg.model == "fourier") {
        out.model = std::make_shared<const FourierWaveletModel>(filter, cfg.j_max);
    } else if (cfg.model == "legendre") {
        out.model = std::make_shared<const LegendreModel>(cfg.legendre_degree);
    } else {
        throw ConfigurationError("unknown model: " + cfg.model);
    }
    return out;
}

std::vector<std::size_t> model_truncation(const ForwardModel& model, int j0) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < model.dictionary_size(); ++i)
        if (model.scale_of(i) <= j0) out.push_back(i);
    return out;
}

// ---------------------------------------------------------------------------------------------------------
// Sweeps

int rule_j0(const ExperimentConfig& cfg, double beta) {
    if (!cfg.j0_rule) return cfg.j0;
    if (!(beta > 0.0)) throw ConfigurationError("the j0 rule needs beta > 0");
    const int j = static_cast<int>(std::floor(2.0 / (2.0 * cfg.phantom.a + 1.0) * std::log(1.0 / beta)));
    return std::clamp(j, 0, std::min(cfg.j0_cap, cfg.j_max));
}

std::size_t rule_samples(const ExperimentConfig& cfg, double beta, int j0, std::size_t s, std::size_t fixed_m) {
    double m = 0.0;
    switch (cfg.m_rule) {
    case MRule::fixed: m = static_cast<double>(fixed_m); break;
    case MRule::sparse: {
        const double sd = std::max<double>(static_cast<double>(s), 2.0);
        const double ls = std::log(sd);
        m = std::ceil(cfg.c0 * sd * std::max(j0 * ls * ls * ls, std::log(1.0 / cfg.gamma)) - 1e-9);
        break;
    }
    case MRule::noise: {
        if (!(beta > 0.0)) throw ConfigurationError("the noise-scaling m rule needs beta > 0");
        const double a = cfg.phantom.a, p = cfg.p;
        const double e = 2.0 / (2.0 * a + 1.0) + 2.0 * a / (p * (2.0 * a + 1.0));
        const double l = std::log(1.0 / beta);
        m = std::floor(cfg.c0 * std::pow(beta, -e) * l * l * l * l);
        break;
    }
    case MRule::cartoon: {
        if (!(beta > 0.0)) throw ConfigurationError("the cartoon m rule needs beta > 0");
        const double l = std::log(1.0 / beta);
        m = std::floor(cfg.c0 / (beta * beta) * l * l * l * l);
        break;
    }
    }
    if (!std::isfinite(m)) m = static_cast<double>(cfg.m_cap);
    return static_cast<std::size_t>(std::clamp(m, 1.0, static_cast<double>(cfg.m_cap)));
}

CellResult run_cell(const ModelBundle& bundle, const ExperimentConfig& cfg, double beta, std::size_t m, int j0,
                    std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    const ForwardModel& model = *bundle.model;
    CellResult cell;
    PhantomSpec spec = cfg.phantom;
    spec.j0 = j0;
    if (spec.kind != PhantomKind::cartoon) spec.seed = mix_seed(seed, 3) ^ cfg.phantom.seed;
    cell.phantom = make_phantom(spec, model, bundle.atlas.get());
    cell.lambda = model_truncation(model, j0);

    const std::vector<double> samples = model.draw_samples(m, mix_seed(seed, 1));
    AssemblyOptions opts;
    opts.keep_matrix = static_cast<double>(m) * static_cast<double>(model.measurement_size()) *
                           static_cast<double>(cell.lambda.size()) <= 4e7;
    const SampledSystem sys = assemble_sampled_system(bundle.model, cell.lambda, samples, cell.phantom.coefficients,
                                                      beta, mix_seed(seed, 2), opts);
    SolveConfig sc;
    sc.zeta = cfg.zeta;
    sc.b = cfg.b;
    sc.eta = beta + sys.tail_residual;
    sc.max_iters = cfg.max_iters;
    sc.tol_gap = cfg.tol_gap;
    cell.solve = solve_constrained_l1(sys, model_weights(model, cell.lambda), sc);

    Vector full = Vector::Zero(static_cast<Eigen::Index>(model.dictionary_size()));
    for (std::size_t k = 0; k < cell.lambda.size(); ++k)
        full[static_cast<Eigen::Index>(cell.lambda[k])] = cell.solve.x_hat[static_cast<Eigen::Index>(k)];
    const Vector diff = full - cell.phantom.coefficients;

    SweepRecord& r = cell.record;
    r.beta = beta;
    r.m = m;
    r.j0 = j0;
    r.s = cell.phantom.s;
    r.err_l2 = diff.norm();
    r.err_img = bundle.atlas ? bundle.atlas->synthesis(diff).l2_norm() : r.err_l2;
    const double xn = cell.phantom.coefficients.norm();
    r.rel_err = xn > 0.0 ? r.err_l2 / xn : r.err_l2;
    r.residual = cell.solve.residual;
    r.eta = sc.eta;
    r.status = to_string(cell.solve.status);
    r.seed = seed;
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return cell;
}

std::vector<SweepRecord> run_recovery_sweep(const ExperimentConfig& cfg, unsigned workers) {
    validate(cfg);
    const ModelBundle bundle = make_model(cfg);
    struct Cell {
        double beta;
        std::size_t m;
        int j0;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (double beta : cfg.betas) {
        const int j0 = rule_j0(cfg, beta);
        const std::vector<std::size_t> ms =
            cfg.m_rule == MRule::fixed ? cfg.ms : std::vector<std::size_t>{rule_samples(cfg, beta, j0, cfg.phantom.s, 0)};
        for (auto m : ms)
            for (auto seed : cfg.seeds) cells.push_back({beta, m, j0, seed});
    }
    std::vector<SweepRecord> out(cells.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            const Cell& c = cells[i];
            try {
                out[i] = run_cell(bundle, cfg, c.beta, c.m, c.j0, c.seed).record;
            } catch (const Error& e) {
                SweepRecord& r = out[i];
                r.beta = c.beta;
                r.m = c.m;
                r.j0 = c.j0;
                r.seed = c.seed;
                r.err_l2 = r.err_img = r.rel_err = std::numeric_limits<double>::quiet_NaN();
                r.status = std::string("failed: ") + e.what();
            }
        }
    };
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(cells.size(), 1)));
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned k = 0; k < workers; ++k) pool.emplace_back(work);
    }
    return out;
}

Calibration calibrate_c0(const ExperimentConfig& cfg, int pilot_j0, std::size_t seeds) {
    validate(cfg);
    if (seeds < 1) throw ConfigurationError("calibration needs at least one seed");
    ExperimentConfig pilot = cfg;
    pilot.phantom.kind = PhantomKind::sparse;
    const ModelBundle bundle = make_model(pilot);
    Calibration cal;
    cal.pilot_j0 = pilot_j0;
    cal.seeds = seeds;
    const auto needed = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(seeds) - 1e-12));
    auto passes = [&](std::size_t m) {
        std::size_t ok = 0, fail = 0;
        for (std::size_t k = 0; k < seeds && ok < needed && fail <= seeds - needed; ++k) {
            const CellResult c = run_cell(bundle, pilot, 0.0, m, pilot_j0, k);
            if (c.record.rel_err <= 1e-5) ++ok;
            else ++fail;
        }
        cal.trials.emplace_back(m, ok);
        return ok >= needed;
    };
    std::size_t hi = 1;
    while (!passes(hi)) {
        if (hi >= cfg.m_cap) throw NumericalError("no m up to the cap reaches 90% exact recovery on the pilot");
        hi = std::min(2 * hi, cfg.m_cap);
    }
    std::size_t lo = hi / 2; // fails, or 0
    while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (passes(mid)) hi = mid;
        else lo = mid;
    }
    cal.m_star = hi;
    const double sd = std::max<double>(static_cast<double>(cfg.phantom.s), 2.0);
    const double ls = std::log(sd);
    cal.c0 = static_cast<double>(hi) / (sd * std::max(pilot_j0 * ls * ls * ls, std::log(1.0 / cfg.gamma)));
    return cal;
}

// ---------------------------------------------------------------------------------------------------------
// Fits

FitAxis fit_axis_from_string(const std::string& name) {
    if (name == "beta") return FitAxis::beta;
    if (name == "m") return FitAxis::m;
    throw ConfigurationError("unknown fit axis: " + name);
}

ScalingFit fit_scaling(const std::vector<SweepRecord>& records, FitAxis axis) {
    std::map<double, std::vector<double>> cells;
    for (const auto& r : records) cells[axis == FitAxis::beta ? r.beta : static_cast<double>(r.m)].push_back(r.err_img);
    if (cells.size() < 4) throw FitError("at least four distinct axis values are required");
    std::vector<double> x, y;
    for (auto& [v, errs] : cells) {
        if (!(v > 0.0)) throw FitError("axis values must be positive");
        std::sort(errs.begin(), errs.end());
        const std::size_t n = errs.size();
        const double med = n % 2 ? errs[n / 2] : 0.5 * (errs[n / 2 - 1] + errs[n / 2]);
        if (!(med > 0.0)) throw FitError("median errors must be positive");
        x.push_back(std::log(v));
        y.push_back(std::log(med));
    }
    ScalingFit fit;
    fit.points = x.size();
    fit.exponent = regression_slope(x, y);
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    fit.intercept = my - fit.exponent * mx;
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double pred = fit.intercept + fit.exponent * x[i];
        ss_res += (y[i] - pred) * (y[i] - pred);
        ss_tot += (y[i] - my) * (y[i] - my);
    }
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

// ---------------------------------------------------------------------------------------------------------
// Certification report

void run_certification_report(const ExperimentConfig& cfg) {
    validate(cfg);
    const ModelBundle bundle = make_model(cfg);
    const ForwardModel& model = *bundle.model;
    std::vector<std::size_t> lambda = model_truncation(model, cfg.j0);
    GramOptions go;
    go.j_max = cfg.j0;
    go.b = cfg.b;
    go.seed = cfg.seeds.front();
    const GramCertificate cert = compute_gram(bundle.model, lambda, go);

    std::filesystem::create_directories(cfg.out);
    {
        auto out = open_out(cfg.out / "certificate.txt");
        out << "model = " << cfg.model << '\n'
            << "j0 = " << cfg.j0 << '\n'
            << "size = " << lambda.size() << '\n'
            << "quadrature_nodes = " << cert.nodes << '\n'
            << "refine_shift = " << format_double(cert.refine_shift) << '\n'
            << "sigma_min = " << format_double(cert.sigma_min) << '\n'
            << "sigma_max = " << format_double(cert.sigma_max) << '\n'
            << "inv_norm = " << format_double(cert.inv_norm) << '\n'
            << "fbi_violation = " << (cert.fbi_violation ? "true" : "false") << '\n'
            << "B = " << format_double(cert.coherence_B) << '\n'
            << "B_uniform = " << format_double(cert.coherence_uniform) << '\n'
            << "d_exponent = " << format_double(cert.d_exponent) << '\n'
            << "b_fit = " << format_double(cert.b_fit) << '\n'
            << "c_hat = " << format_double(cert.c_hat) << '\n'
            << "C_hat = " << format_double(cert.C_hat) << '\n'
            << "relative_coherence = " << format_double(cert.relative_coherence) << '\n';
    }
    {
        auto out = open_out(cfg.out / "coherence.csv");
        out << "scale,max_norm\n";
        for (std::size_t k = 0; k < cert.coherence.scales.size(); ++k)
            out << cert.coherence.scales[k] << ',' << format_double(cert.coherence.scale_max[k]) << '\n';
    }
    const WeightVector w = model_weights(model, lambda);
    std::vector<double> lambdas = cfg.lambdas;
    if (lambdas.empty()) lambdas.push_back(static_cast<double>(cfg.phantom.s));
    {
        auto out = open_out(cfg.out / "delta.csv");
        out << "m,lambda,method,supports,delta_star\n";
        const Vector zero = Vector::Zero(static_cast<Eigen::Index>(model.dictionary_size()));
        for (auto m : cfg.ms) {
            const std::vector<double> samples = model.draw_samples(m, mix_seed(cfg.seeds.front(), 1));
            const SampledSystem sys =
                assemble_sampled_system(bundle.model, lambda, samples, zero, 0.0, 0, AssemblyOptions{false});
            for (double lam : lambdas) {
                const RipEstimate mc = delta_star_montecarlo(sys, cert, w, lam, cfg.rip_trials, cfg.seeds.front());
                out << m << ',' << format_double(lam) << ",montecarlo," << mc.trials_or_supports << ','
                    << format_double(mc.delta_star) << '\n';
                if (lambda.size() <= 16) {
                    const RipEstimate bf = delta_star_bruteforce(sys, cert, w, lam);
                    out << m << ',' << format_double(lam) << ",bruteforce," << bf.trials_or_supports << ','
                        << format_double(bf.delta_star) << '\n';
                }
            }
        }
    }
    {
        auto out = open_out(cfg.out / "complexity.csv");
        out << "variant,tau,m\n";
        ComplexityInputs in;
        in.s = std::max<double>(2.0, static_cast<double>(cfg.phantom.s));
        in.dictionary_size = static_cast<double>(lambda.size());
        in.gamma = cfg.gamma;
        in.c0 = cfg.c0;
        in.zeta = cfg.zeta;
        in.j0 = cfg.j0;
        in.max_weight = w.max();
        for (auto v : {ComplexityVariant::uniform, ComplexityVariant::relative, ComplexityVariant::radon_j0,
                       ComplexityVariant::radon_s}) {
            try {
                const double tau = complexity_tau(cert, in, v);
                out << to_string(v) << ',' << format_double(tau) << ',' << sample_complexity(cert, in, v) << '\n';
            } catch (const DomainError& e) {
                out << to_string(v) << ',' << csv_escape(std::string("precondition failed: ") + e.what()) << ",\n";
            }
        }
    }
}

// ---------------------------------------------------------------------------------------------------------
// Files

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (quoted) throw IoError("unterminated quoted CSV field");
    out.push_back(std::move(cur));
    return out;
}

namespace {
constexpr const char* kRecordHeader = "beta,m,j0,s,err_l2,err_img,rel_err,residual,eta,status,seed";
}

void write_records_csv(const std::vector<SweepRecord>& records, const std::filesystem::path& path) {
    auto out = open_out(path, std::ios::out | std::ios::binary);
    out << kRecordHeader << "\r\n";
    for (const auto& r : records)
        out << format_double(r.beta) << ',' << r.m << ',' << r.j0 << ',' << r.s << ',' << format_double(r.err_l2) << ','
            << format_double(r.err_img) << ',' << format_double(r.rel_err) << ',' << format_double(r.residual) << ','
            << format_double(r.eta) << ',' << csv_escape(r.status) << ',' << r.seed << "\r\n";
}

std::vector<SweepRecord> read_records_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty records file");
    const std::vector<std::string> header = csv_split(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* need : {"beta", "m", "err_img"})
        if (!col.count(need)) throw IoError(std::string("records file lacks column ") + need);
    auto num = [&](const std::vector<std::string>& f, const char* name, double dflt) {
        const auto it = col.find(name);
        if (it == col.end() || it->second >= f.size() || f[it->second].empty()) return dflt;
        try {
            return std::stod(f[it->second]);
        } catch (const std::exception&) {
            throw IoError(std::string("malformed value in column ") + name);
        }
    };
    std::vector<SweepRecord> out;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> f = csv_split(line);
        SweepRecord r;
        r.beta = num(f, "beta", 0.0);
        r.m = static_cast<std::size_t>(num(f, "m", 0.0));
        r.j0 = static_cast<int>(num(f, "j0", 0.0));
        r.s = static_cast<std::size_t>(num(f, "s", 0.0));
        r.err_l2 = num(f, "err_l2", 0.0);
        r.err_img = num(f, "err_img", 0.0);
        r.rel_err = num(f, "rel_err", 0.0);
        r.residual = num(f, "residual", 0.0);
        r.eta = num(f, "eta", 0.0);
        if (const auto it = col.find("status"); it != col.end() && it->second < f.size()) r.status = f[it->second];
        r.seed = static_cast<std::uint64_t>(num(f, "seed", 0.0));
        out.push_back(std::move(r));
    }
    return out;
}

void write_timings_csv(const std::vector<SweepRecord>& records, const std::filesystem::path& path) {
    auto out = open_out(path, std::ios::out | std::ios::binary);
    out << "beta,m,j0,seed,wall_time\r\n";
    for (const auto& r : records)
        out << format_double(r.beta) << ',' << r.m << ',' << r.j0 << ',' << r.seed << ',' << format_double(r.wall_time)
            << "\r\n";
}

void write_fit(const ScalingFit& fit, FitAxis axis, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "axis = " << (axis == FitAxis::beta ? "beta" : "m") << '\n'
        << "exponent = " << format_double(fit.exponent) << '\n'
        << "intercept = " << format_double(fit.intercept) << '\n'
        << "r2 = " << format_double(fit.r2) << '\n'
        << "points = " << fit.points << '\n';
}

void write_pgm(const Image& image, const std::filesystem::path& path) {
    const int n = image.grid.size;
    auto out = open_out(path, std::ios::out | std::ios::binary);
    out << "P5\n" << n << ' ' << n << "\n255\n";
    const double lo = n > 0 ? image.values.minCoeff() : 0.0, hi = n > 0 ? image.values.maxCoeff() : 0.0;
    const double span = hi > lo ? hi - lo : 1.0;
    for (int r = n - 1; r >= 0; --r)
        for (int i = 0; i < n; ++i) {
            const double v = std::clamp((image.values(i, r) - lo) / span, 0.0, 1.0);
            out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
        }
}

void write_image_binary(const Image& image, const std::filesystem::path& stem) {
    {
        auto out = open_out(stem.string() + ".txt");
        out << "size = " << image.grid.size << '\n'
            << "extent = " << format_double(image.grid.extent) << '\n'
            << "h = " << format_double(image.grid.h) << '\n'
            << "layout = float64 little-endian, value[i * size + k] = u(-extent + i h, -extent + k h)\n";
    }
    auto out = open_out(stem.string() + ".bin", std::ios::out | std::ios::binary);
    for (int i = 0; i < image.grid.size; ++i)
        for (int k = 0; k < image.grid.size; ++k) {
            const double v = image.values(i, k);
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
}

} // namespace sparsetomo
