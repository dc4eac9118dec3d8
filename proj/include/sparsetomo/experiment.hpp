#pragma once

#include "sparsetomo/certification.hpp"
#include "sparsetomo/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sparsetomo {

enum class PhantomKind { sparse, cartoon, tail };

PhantomKind phantom_kind_from_string(const std::string& name);
std::string to_string(PhantomKind kind);

struct PhantomSpec {
    PhantomKind kind = PhantomKind::sparse;
    std::size_t s = 5;       // sparse: number of nonzeros
    int j0 = 3;              // sparse: support drawn from Λ_{j0}
    double a = 0.5;          // tail: decay ‖P_{Λ_j}^⊥ x†‖₂ ∝ 2^{-aj}
    double amplitude = 1.0;  // tail: ‖P_{Λ_0}^⊥ x†‖₂
    std::uint64_t seed = 0;
};

struct Phantom {
    Vector coefficients;      // x† over the whole dictionary
    std::optional<Image> image; // u† = Φ* x† for atlas-based models
    std::size_t s = 0;        // number of nonzeros
    double a_effective = 0.0; // fitted decay of the tail norms (tail and cartoon phantoms)
};

// Sparse phantoms work for any model; cartoon and tail phantoms need an atlas.
Phantom make_phantom(const PhantomSpec& spec, const ForwardModel& model, const DictionaryAtlas* atlas);

// Cartoon image on the atlas grid: two smooth bumps and one ellipse indicator inside B₁.
Image cartoon_image(const GridSpec& grid, std::uint64_t seed);

// ‖P_{Λ_j}^⊥ x‖₂ for j = 0..j_max - 1.
std::vector<double> tail_norms(const Vector& x, std::span<const int> scales, int j_max);

enum class MRule { fixed, sparse, noise, cartoon };

MRule m_rule_from_string(const std::string& name);
std::string to_string(MRule rule);

struct ExperimentConfig {
    std::string model = "radon";   // radon | fanbeam | fourier | legendre
    int wavelet_order = 2;
    int j0 = 3;
    int j_max = 3;
    double ds_factor = 1.0;        // Δs (or Δα·ρ) in units of the atlas step
    PhantomSpec phantom;
    std::vector<double> betas{0.0};
    std::vector<std::size_t> ms{16};
    MRule m_rule = MRule::fixed;
    bool j0_rule = false;          // j₀ = ⌊2/(2a+1) ln(1/β)⌋, capped at j0_cap
    int j0_cap = 3;
    std::size_t m_cap = 4096;
    double c0 = 1.0;
    bool calibrate = false;        // fit C₀ on the pilot before sweeping
    int pilot_j0 = 1;
    std::size_t pilot_seeds = 20;
    double p = 0.5;                // compressibility exponent in the noise-scaling m rule
    double gamma = 0.1;
    double zeta = 0.0;
    double b = 0.5;
    std::vector<std::uint64_t> seeds{0};
    std::size_t legendre_degree = 30;
    std::vector<double> lambdas;   // δ* budgets for the certification report; empty selects {s}
    std::size_t rip_trials = 200;
    int max_iters = 50000;
    double tol_gap = 1e-8;
    std::filesystem::path out = "out";
};

ExperimentConfig config_from_json_file(const std::filesystem::path& path);
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);
// Throws ConfigurationError for inconsistent scales, β outside [0, 1), m = 0, caps exceeded or missing seeds.
void validate(const ExperimentConfig& cfg);

// Model (and its atlas, when the model has one) described by the configuration.
struct ModelBundle {
    std::shared_ptr<const DictionaryAtlas> atlas;
    std::shared_ptr<const ForwardModel> model;
};
ModelBundle make_model(const ExperimentConfig& cfg);

// Dictionary indices with scale ≤ j0.
std::vector<std::size_t> model_truncation(const ForwardModel& model, int j0);

struct SweepRecord {
    double beta = 0.0;
    std::size_t m = 0;
    int j0 = 0;
    std::size_t s = 0;
    double err_l2 = 0.0;      // ‖x† - x̂‖₂ over the whole dictionary
    double err_img = 0.0;     // ‖u† - û‖_{L²} (equals err_l2 for models without an image)
    double rel_err = 0.0;     // err_l2 / ‖x†‖₂
    double residual = 0.0;
    double eta = 0.0;
    std::string status;
    double wall_time = 0.0;
    std::uint64_t seed = 0;
};

// Number of samples for a cell under the configured rule, clamped to [1, m_cap].
std::size_t rule_samples(const ExperimentConfig& cfg, double beta, int j0, std::size_t s, std::size_t fixed_m);
int rule_j0(const ExperimentConfig& cfg, double beta);

struct CellResult {
    SweepRecord record;
    SolveResult solve;
    Phantom phantom;
    std::vector<std::size_t> lambda;
};

// One (β, m, seed) cell: draw samples, assemble, solve with η = β + ‖Q A P_Λ^⊥ x†‖, score.
CellResult run_cell(const ModelBundle& bundle, const ExperimentConfig& cfg, double beta, std::size_t m, int j0,
                    std::uint64_t seed);

// Cells are independent and run on `workers` threads (0 selects the hardware concurrency); the record order
// follows (β, m, seed) regardless. Cells that throw are kept with a "failed: ..." status and NaN errors.
std::vector<SweepRecord> run_recovery_sweep(const ExperimentConfig& cfg, unsigned workers = 0);

struct Calibration {
    std::size_t m_star = 0;
    double c0 = 0.0;
    int pilot_j0 = 0;
    std::size_t seeds = 0;
    std::vector<std::pair<std::size_t, std::size_t>> trials; // (m, successes)
};

// Smallest m with at least 90% exact recoveries (relative error ≤ 1e-5) over `seeds` seeds at pilot_j0,
// converted to C₀ through m = C₀ s max{j₀ log³ s, log(1/γ)}.
Calibration calibrate_c0(const ExperimentConfig& cfg, int pilot_j0, std::size_t seeds = 20);

enum class FitAxis { beta, m };

FitAxis fit_axis_from_string(const std::string& name);

struct ScalingFit {
    double exponent = 0.0; // slope of ln(median error) against ln(axis)
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t points = 0;
};

ScalingFit fit_scaling(const std::vector<SweepRecord>& records, FitAxis axis);

// Files: certificate.txt, coherence.csv, delta.csv, complexity.csv.
void run_certification_report(const ExperimentConfig& cfg);

// CSV with a header line and RFC-4180 quoting; wall times are excluded so reruns are byte-identical.
void write_records_csv(const std::vector<SweepRecord>& records, const std::filesystem::path& path);
std::vector<SweepRecord> read_records_csv(const std::filesystem::path& path);
void write_timings_csv(const std::vector<SweepRecord>& records, const std::filesystem::path& path);
void write_fit(const ScalingFit& fit, FitAxis axis, const std::filesystem::path& path);

std::string csv_escape(const std::string& field);
std::vector<std::string> csv_split(const std::string& line);
std::string format_double(double v);

// 8-bit preview scaled to the image range, and row-major float64 values with a text header.
void write_pgm(const Image& image, const std::filesystem::path& path);
void write_image_binary(const Image& image, const std::filesystem::path& stem);

} // namespace sparsetomo
