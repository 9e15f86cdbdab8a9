#pragma once

// Seeded Monte Carlo experiment driver: per-point BER of every receiver,
// sweeps over back-off and Eb/N0, CSV output and text reports.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hoc/channel.hpp"
#include "hoc/imd.hpp"
#include "hoc/link.hpp"
#include "hoc/receivers.hpp"

namespace hoc {

// ---------------------------------------------------------------------------
// Configuration

inline const std::vector<std::string>& known_receivers() {
    static const std::vector<std::string> ids{"zf", "cnc", "hoc3", "hoc5", "hoc-full3", "lchoc"};
    return ids;
}

struct ExperimentConfig {
    std::string experiment = "hoc";
    OfdmConfig ofdm = contiguous_config(64, 16, 6, -3, 64);
    PaModel pa = RappParams{1.0, 1.0, 10.0};
    std::vector<double> ibo_db{-4.0};
    std::vector<double> ebn0_db{34.0};
    std::vector<std::string> receivers{"zf", "cnc", "hoc3", "hoc5", "lchoc"};
    int n_channel_instances = 50;
    std::size_t n_train_frames = 2000;
    std::size_t n_test_frames = 2000;
    std::size_t lchoc_train_frames = 10000;
    std::size_t alpha_samples = 200000;
    std::size_t calibration_frames = 2000;
    int cnc_iterations = 10;
    std::uint64_t master_seed = 1;
    double ridge = 0.0;
    std::string output = "results.csv";
    /// Off by default: timing would make reruns differ byte-wise.
    bool record_wall_time = false;

    bool has_receiver(const std::string& id) const {
        return std::find(receivers.begin(), receivers.end(), id) != receivers.end();
    }

    std::size_t widest_term_set(CombinerKind kind) const {
        std::size_t w = 0;
        for (const auto& t : combiner_terms(ofdm.used_indices, kind)) w = std::max(w, t.size());
        return w;
    }

    void validate() const {
        ofdm.validate();
        hoc::validate(pa);
        if (ibo_db.empty() || ebn0_db.empty() || receivers.empty())
            throw std::invalid_argument("config: ibo_db, ebn0_db and receivers must be non-empty");
        for (const auto& r : receivers)
            if (std::find(known_receivers().begin(), known_receivers().end(), r) == known_receivers().end())
                throw std::invalid_argument("config: unknown receiver '" + r + "'");
        if (n_channel_instances < 1) throw std::invalid_argument("config: n_channel_instances must be >= 1");
        if (n_test_frames == 0) throw std::invalid_argument("config: n_test_frames must be >= 1");
        if (cnc_iterations < 0) throw std::invalid_argument("config: cnc_iterations must be >= 0");
        if (ridge < 0.0) throw std::invalid_argument("config: ridge must be non-negative");
        auto need = [&](const char* id, CombinerKind kind, std::size_t frames, const char* field) {
            if (!has_receiver(id)) return;
            const std::size_t w = widest_term_set(kind);
            if (frames < kOverdetermination * w)
                throw std::invalid_argument(std::string("config: ") + field + " = " + std::to_string(frames) + " but " +
                                            id + " needs >= " + std::to_string(kOverdetermination * w));
        };
        need("hoc3", CombinerKind::imd3, n_train_frames, "n_train_frames");
        need("hoc5", CombinerKind::imd5, n_train_frames, "n_train_frames");
        need("hoc-full3", CombinerKind::full3, n_train_frames, "n_train_frames");
        need("lchoc", CombinerKind::imd5, lchoc_train_frames, "lchoc_train_frames");
    }
};

inline nlohmann::json pa_to_json(const PaModel& pa) {
    using nlohmann::json;
    if (const auto* r = std::get_if<RappParams>(&pa))
        return json{{"model", "rapp"}, {"gain", r->gain}, {"p_max", r->p_max}, {"smoothness", r->smoothness}};
    if (const auto* s = std::get_if<SoftLimiterParams>(&pa))
        return json{{"model", "soft_limiter"}, {"gain", s->gain}, {"p_max", s->p_max}};
    json coeffs = json::array();
    for (const auto& c : std::get<PolynomialParams>(pa).coeffs) coeffs.push_back({c.real(), c.imag()});
    return json{{"model", "polynomial"}, {"coeffs", coeffs}};
}

inline PaModel pa_from_json(const nlohmann::json& j) {
    const std::string model = j.value("model", "rapp");
    if (model == "rapp")
        return RappParams{j.value("gain", 1.0), j.value("p_max", 1.0), j.value("smoothness", 10.0)};
    if (model == "soft_limiter") return SoftLimiterParams{j.value("gain", 1.0), j.value("p_max", 1.0)};
    if (model == "polynomial") {
        PolynomialParams p;
        p.coeffs.clear();
        for (const auto& c : j.at("coeffs")) {
            if (c.is_array()) p.coeffs.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
            else p.coeffs.emplace_back(c.get<double>(), 0.0);
        }
        return p;
    }
    throw std::invalid_argument("config: unknown PA model '" + model + "'");
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    return nlohmann::json{{"experiment", c.experiment},
                          {"ofdm",
                           {{"n_fft", c.ofdm.n_fft},
                            {"n_cp", c.ofdm.n_cp},
                            {"used_indices", c.ofdm.used_indices},
                            {"mod_order", c.ofdm.mod_order}}},
                          {"pa", pa_to_json(c.pa)},
                          {"ibo_db", c.ibo_db},
                          {"ebn0_db", c.ebn0_db},
                          {"receivers", c.receivers},
                          {"n_channel_instances", c.n_channel_instances},
                          {"n_train_frames", c.n_train_frames},
                          {"n_test_frames", c.n_test_frames},
                          {"lchoc_train_frames", c.lchoc_train_frames},
                          {"alpha_samples", c.alpha_samples},
                          {"calibration_frames", c.calibration_frames},
                          {"cnc_iterations", c.cnc_iterations},
                          {"master_seed", c.master_seed},
                          {"ridge", c.ridge},
                          {"output", c.output},
                          {"record_wall_time", c.record_wall_time}};
}

/// Missing keys keep their defaults. Cross-field checks are left to
/// ExperimentConfig::validate so that reports can run on partial configs.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.experiment = j.value("experiment", c.experiment);
    if (j.contains("ofdm")) {
        const auto& o = j.at("ofdm");
        const int n_fft = o.value("n_fft", c.ofdm.n_fft);
        const int n_cp = o.value("n_cp", c.ofdm.n_cp);
        const int m = o.value("mod_order", c.ofdm.mod_order);
        if (o.contains("used_indices")) {
            c.ofdm = OfdmConfig{n_fft, n_cp, o.at("used_indices").get<std::vector<int>>(), m};
        } else {
            c.ofdm = contiguous_config(n_fft, n_cp, o.value("n_used", 6), o.value("first_index", -3), m);
        }
    }
    if (j.contains("pa")) c.pa = pa_from_json(j.at("pa"));
    c.ibo_db = j.value("ibo_db", c.ibo_db);
    c.ebn0_db = j.value("ebn0_db", c.ebn0_db);
    c.receivers = j.value("receivers", c.receivers);
    c.n_channel_instances = j.value("n_channel_instances", c.n_channel_instances);
    c.n_train_frames = j.value("n_train_frames", c.n_train_frames);
    c.n_test_frames = j.value("n_test_frames", c.n_test_frames);
    c.lchoc_train_frames = j.value("lchoc_train_frames", c.lchoc_train_frames);
    c.alpha_samples = j.value("alpha_samples", c.alpha_samples);
    c.calibration_frames = j.value("calibration_frames", c.calibration_frames);
    c.cnc_iterations = j.value("cnc_iterations", c.cnc_iterations);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.ridge = j.value("ridge", c.ridge);
    c.output = j.value("output", c.output);
    c.record_wall_time = j.value("record_wall_time", c.record_wall_time);
    c.ofdm.validate();
    hoc::validate(c.pa);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    return config_from_json(nlohmann::json::parse(in));
}

// ---------------------------------------------------------------------------
// Seeds

enum class SeedPurpose : std::uint64_t {
    channel = 1,
    train_data,
    train_noise,
    test_data,
    test_noise,
    lchoc,
    alpha,
    calibration,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic sub-seed for (master, purpose, a, b, c).
inline std::uint64_t derive_seed(std::uint64_t master, SeedPurpose purpose, std::uint64_t a = 0, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t h = splitmix64(master);
    for (std::uint64_t v : {static_cast<std::uint64_t>(purpose), a, b, c}) h = splitmix64(h ^ splitmix64(v + 0x632be59bd9b4e019ULL));
    return h;
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Per-IBO state shared by all points at that back-off.

struct IboContext {
    std::size_t ibo_index = 0;
    Transmitter tx;
    /// Mean |Y_k|^2 at the PA output over the occupied subcarriers.
    double signal_power = 0.0;
    std::optional<CombinerCoefficients> lchoc;
};

inline double measure_subcarrier_power(const Transmitter& tx, std::size_t n_frames, std::uint64_t seed) {
    Rng rng(seed);
    double acc = 0.0;
    for (std::size_t f = 0; f < n_frames; ++f) {
        const auto y = tx.transmit(random_frame(tx.qam(), tx.config().n_used(), rng).data);
        for (const auto& v : y) acc += std::norm(v);
    }
    return acc / static_cast<double>(n_frames * tx.config().n_used());
}

inline std::string lchoc_cache_key(const ExperimentConfig& cfg, double ibo_db, std::uint64_t seed) {
    std::ostringstream os;
    os.precision(17);
    os << describe(cfg.pa) << "|ibo=" << ibo_db << "|ofdm=" << to_json(cfg).at("ofdm").dump()
       << "|frames=" << cfg.lchoc_train_frames << "|alpha_samples=" << cfg.alpha_samples << "|seed=" << seed;
    return os.str();
}

/// Trains (or loads from `cache_dir`, when non-empty) the PA-only combiner.
inline CombinerCoefficients cached_lchoc(const ExperimentConfig& cfg, const Transmitter& tx, std::size_t ibo_index,
                                         const std::filesystem::path& cache_dir) {
    const std::uint64_t seed = derive_seed(cfg.master_seed, SeedPurpose::lchoc, ibo_index);
    const std::string key = lchoc_cache_key(cfg, cfg.ibo_db[ibo_index], seed);
    std::filesystem::path file;
    if (!cache_dir.empty()) {
        char name[64];
        std::snprintf(name, sizeof name, "lchoc_%016llx.txt", static_cast<unsigned long long>(fnv1a(key)));
        file = cache_dir / name;
        if (std::ifstream in(file); in) {
            std::string first;
            std::getline(in, first);
            if (first == "key " + key) {
                std::stringstream rest;
                rest << in.rdbuf();
                return combiner_from_text(rest.str());
            }
        }
    }
    auto coeffs = lchoc_train(tx, cfg.lchoc_train_frames, seed, CombinerKind::imd5, cfg.ridge);
    if (!file.empty()) {
        std::filesystem::create_directories(cache_dir);
        std::ofstream out(file);
        out << "key " << key << "\n" << to_text(coeffs);
    }
    return coeffs;
}

inline IboContext prepare_ibo(const ExperimentConfig& cfg, std::size_t ibo_index,
                              const std::filesystem::path& cache_dir = {}) {
    // Common alpha/calibration seeds across IBOs keep alpha(IBO) smooth.
    const auto op = make_operating_point(cfg.pa, cfg.ofdm, cfg.ibo_db.at(ibo_index), cfg.alpha_samples,
                                         derive_seed(cfg.master_seed, SeedPurpose::alpha));
    IboContext ctx{ibo_index, Transmitter(cfg.ofdm, op), 0.0, std::nullopt};
    ctx.signal_power =
        measure_subcarrier_power(ctx.tx, cfg.calibration_frames, derive_seed(cfg.master_seed, SeedPurpose::calibration));
    if (cfg.has_receiver("lchoc")) ctx.lchoc = cached_lchoc(cfg, ctx.tx, ibo_index, cache_dir);
    return ctx;
}

// ---------------------------------------------------------------------------
// One point: (IBO, Eb/N0, channel instance)

struct BerRecord {
    std::string receiver;
    double ibo_db = 0.0;
    double ebn0_db = 0.0;
    int instance = 0;
    double ber_train = 0.0;
    double ber_test = 0.0;
    std::size_t n_bits = 0;
    std::size_t zero_gain_events = 0;
    double wall_ms = 0.0;
};

struct PointDiagnostics {
    /// In-sample MSE per subcarrier of each trained channel-aware combiner.
    std::map<std::string, std::vector<double>> in_sample_mse;
    /// In-sample MSE per subcarrier of ZF on the training frames.
    std::vector<double> zf_in_sample_mse;
    std::size_t ridge_fallbacks = 0;
};

struct PointResult {
    std::vector<BerRecord> records;
    PointDiagnostics diagnostics;
};

struct FrameSet {
    std::vector<cvec> sent;
    bitvec bits;
    std::vector<cvec> received;
};

inline FrameSet make_frames(const Transmitter& tx, const ChannelRealization& ch, std::size_t n_frames,
                            std::uint64_t data_seed, std::uint64_t noise_seed) {
    Rng data_rng(data_seed), noise_rng(noise_seed);
    FrameSet fs;
    fs.sent.reserve(n_frames);
    fs.received.reserve(n_frames);
    for (std::size_t f = 0; f < n_frames; ++f) {
        auto frame = random_frame(tx.qam(), tx.config().n_used(), data_rng);
        fs.received.push_back(apply_freq_channel(tx.transmit(frame.data), ch, noise_rng));
        fs.bits.insert(fs.bits.end(), frame.bits.begin(), frame.bits.end());
        fs.sent.push_back(std::move(frame.data));
    }
    return fs;
}

/// The channel of instance i is the same at every (IBO, Eb/N0); data and
/// noise streams are drawn per point.
inline ChannelRealization draw_channel(const ExperimentConfig& cfg, int instance, double noise_var) {
    Rng rng(derive_seed(cfg.master_seed, SeedPurpose::channel, static_cast<std::uint64_t>(instance)));
    return {draw_rayleigh(cfg.ofdm.n_used(), rng), noise_var};
}

inline PointResult run_point(const ExperimentConfig& cfg, const IboContext& ctx, std::size_t ebn0_index, int instance) {
    using clock = std::chrono::steady_clock;
    const double ibo = cfg.ibo_db.at(ctx.ibo_index);
    const double ebn0 = cfg.ebn0_db.at(ebn0_index);
    const auto a = static_cast<std::uint64_t>(ctx.ibo_index), b = static_cast<std::uint64_t>(ebn0_index),
               c = static_cast<std::uint64_t>(instance);
    const double noise_var = calibrate_noise(ebn0, ctx.signal_power, cfg.ofdm.mod_order);
    const ChannelRealization ch = draw_channel(cfg, instance, noise_var);
    const Transmitter& tx = ctx.tx;
    const auto& qam = tx.qam();

    const FrameSet train = make_frames(tx, ch, cfg.n_train_frames, derive_seed(cfg.master_seed, SeedPurpose::train_data, a, b, c),
                                       derive_seed(cfg.master_seed, SeedPurpose::train_noise, a, b, c));
    const FrameSet test = make_frames(tx, ch, cfg.n_test_frames, derive_seed(cfg.master_seed, SeedPurpose::test_data, a, b, c),
                                      derive_seed(cfg.master_seed, SeedPurpose::test_noise, a, b, c));

    PointResult out;
    auto ber = [](const DetectionResult& d, const FrameSet& fs) {
        return fs.bits.empty() ? 0.0 : static_cast<double>(count_bit_errors(d.bits, fs.bits)) / static_cast<double>(fs.bits.size());
    };

    for (const auto& id : cfg.receivers) {
        const auto t0 = clock::now();
        BerRecord rec{id, ibo, ebn0, instance, 0.0, 0.0, test.bits.size(), 0, 0.0};
        DetectionResult on_train, on_test;
        try {
            if (id == "zf") {
                on_train = zf_detect(train.received, ch, tx.operating_point().effective_gain(), qam);
                on_test = zf_detect(test.received, ch, tx.operating_point().effective_gain(), qam);
            } else if (id == "cnc") {
                on_train = cnc_detect(train.received, ch, tx, cfg.cnc_iterations);
                on_test = cnc_detect(test.received, ch, tx, cfg.cnc_iterations);
            } else if (id == "lchoc") {
                on_train = lchoc_detect(train.received, ch, *ctx.lchoc, qam);
                on_test = lchoc_detect(test.received, ch, *ctx.lchoc, qam);
            } else {
                const CombinerKind kind = id == "hoc3" ? CombinerKind::imd3 : id == "hoc5" ? CombinerKind::imd5 : CombinerKind::full3;
                TrainingInfo info{ibo, ebn0, instance, 0, derive_seed(cfg.master_seed, SeedPurpose::train_data, a, b, c)};
                const auto coeffs = hoc_train(train.received, train.sent, cfg.ofdm.used_indices, kind, cfg.ridge,
                                              Provenance::trained_with_channel, info);
                auto& mse = out.diagnostics.in_sample_mse[id];
                for (const auto& sc : coeffs.subcarriers) {
                    mse.push_back(sc.in_sample_mse);
                    out.diagnostics.ridge_fallbacks += sc.ridge_fallback;
                }
                on_train = hoc_detect(train.received, coeffs, qam);
                on_test = hoc_detect(test.received, coeffs, qam);
            }
        } catch (const std::exception& e) {
            std::ostringstream os;
            os << "receiver " << id << " at ibo_db=" << ibo << " ebn0_db=" << ebn0 << " instance=" << instance << ": " << e.what();
            throw std::runtime_error(os.str());
        }
        if (id == "zf") {
            const std::size_t n = cfg.ofdm.n_used();
            out.diagnostics.zf_in_sample_mse.assign(n, 0.0);
            for (std::size_t f = 0; f < train.sent.size(); ++f)
                for (std::size_t k = 0; k < n; ++k)
                    out.diagnostics.zf_in_sample_mse[k] += std::norm(on_train.symbols[f][k] - train.sent[f][k]);
            for (auto& v : out.diagnostics.zf_in_sample_mse) v /= static_cast<double>(train.sent.size());
        }
        rec.ber_train = ber(on_train, train);
        rec.ber_test = ber(on_test, test);
        rec.zero_gain_events = on_test.zero_gain_events;
        if (cfg.record_wall_time)
            rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        out.records.push_back(rec);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kCsvHeader =
    "experiment,receiver,ibo_db,ebn0_db,instance,ber_train,ber_test,n_bits,zero_gain_events,wall_ms";

inline std::string format_double(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline std::string csv_row(const std::string& experiment, const BerRecord& r, const std::string& instance) {
    std::ostringstream os;
    os << experiment << "," << r.receiver << "," << format_double(r.ibo_db, 10) << "," << format_double(r.ebn0_db, 10) << ","
       << instance << "," << format_double(r.ber_train, 17) << "," << format_double(r.ber_test, 17) << "," << r.n_bits << ","
       << r.zero_gain_events << "," << format_double(r.wall_ms, 6);
    return os.str();
}

struct SummaryRecord {
    BerRecord mean;  // instance field unused
    std::size_t n_instances = 0;
};

/// Bit-weighted mean BER per (receiver, ibo, ebn0), in first-seen order.
inline std::vector<SummaryRecord> summarize(const std::vector<BerRecord>& records) {
    std::vector<SummaryRecord> out;
    std::vector<double> err_train, err_test;
    std::vector<std::size_t> train_bits;
    for (const auto& r : records) {
        auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRecord& s) {
            return s.mean.receiver == r.receiver && s.mean.ibo_db == r.ibo_db && s.mean.ebn0_db == r.ebn0_db;
        });
        if (it == out.end()) {
            out.push_back({BerRecord{r.receiver, r.ibo_db, r.ebn0_db, -1, 0.0, 0.0, 0, 0, 0.0}, 0});
            err_train.push_back(0.0);
            err_test.push_back(0.0);
            it = out.end() - 1;
        }
        const auto i = static_cast<std::size_t>(it - out.begin());
        err_train[i] += r.ber_train * static_cast<double>(r.n_bits);
        err_test[i] += r.ber_test * static_cast<double>(r.n_bits);
        it->mean.n_bits += r.n_bits;
        it->mean.zero_gain_events += r.zero_gain_events;
        it->mean.wall_ms += r.wall_ms;
        ++it->n_instances;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double bits = static_cast<double>(out[i].mean.n_bits);
        out[i].mean.ber_train = bits > 0 ? err_train[i] / bits : 0.0;
        out[i].mean.ber_test = bits > 0 ? err_test[i] / bits : 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweep

inline int worker_count() {
    if (const char* env = std::getenv("HOC_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

struct SweepResult {
    std::vector<BerRecord> records;
    std::vector<SummaryRecord> summary;
    std::vector<PointDiagnostics> diagnostics;
};

/// Runs every (ibo, ebn0, instance) point on a worker pool. Rows reach `csv`
/// in point order as soon as the preceding points have finished, followed by
/// one summary row per (receiver, ibo, ebn0) with instance "mean". On failure
/// the completed rows are flushed and the first error is rethrown.
inline SweepResult sweep(const ExperimentConfig& cfg, std::ostream* csv = nullptr,
                         const std::filesystem::path& cache_dir = {}) {
    cfg.validate();
    std::vector<IboContext> contexts;
    for (std::size_t i = 0; i < cfg.ibo_db.size(); ++i) contexts.push_back(prepare_ibo(cfg, i, cache_dir));

    struct Task {
        std::size_t ibo, ebn0;
        int instance;
    };
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < cfg.ibo_db.size(); ++i)
        for (std::size_t e = 0; e < cfg.ebn0_db.size(); ++e)
            for (int inst = 0; inst < cfg.n_channel_instances; ++inst) tasks.push_back({i, e, inst});

    std::vector<std::optional<PointResult>> results(tasks.size());
    std::mutex mtx;
    std::size_t flushed = 0;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;

    if (csv) *csv << kCsvHeader << "\n";
    auto flush_ready = [&]() {
        while (flushed < results.size() && results[flushed]) {
            if (csv)
                for (const auto& r : results[flushed]->records) *csv << csv_row(cfg.experiment, r, std::to_string(r.instance)) << "\n";
            ++flushed;
        }
        if (csv) csv->flush();
    };

    auto worker = [&]() {
        while (!failed) {
            const std::size_t t = next++;
            if (t >= tasks.size()) return;
            try {
                auto res = run_point(cfg, contexts[tasks[t].ibo], tasks[t].ebn0, tasks[t].instance);
                std::lock_guard lock(mtx);
                results[t] = std::move(res);
                flush_ready();
            } catch (...) {
                std::lock_guard lock(mtx);
                if (!first_error) first_error = std::current_exception();
                failed = true;
            }
        }
    };

    const int n_workers = std::min<int>(worker_count(), static_cast<int>(tasks.size()));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    if (first_error) {
        if (csv) {
            for (std::size_t t = flushed; t < results.size(); ++t)
                if (results[t])
                    for (const auto& r : results[t]->records) *csv << csv_row(cfg.experiment, r, std::to_string(r.instance)) << "\n";
            csv->flush();
        }
        std::rethrow_exception(first_error);
    }

    SweepResult out;
    for (auto& r : results) {
        out.records.insert(out.records.end(), r->records.begin(), r->records.end());
        out.diagnostics.push_back(std::move(r->diagnostics));
    }
    out.summary = summarize(out.records);
    if (csv) {
        for (const auto& s : out.summary) *csv << csv_row(cfg.experiment, s.mean, "mean") << "\n";
        csv->flush();
    }
    return out;
}

/// Directory for cached PA-only combiners: beside the output file.
inline std::filesystem::path default_cache_dir(const ExperimentConfig& cfg) {
    if (cfg.output.empty()) return {};
    const auto parent = std::filesystem::path(cfg.output).parent_path();
    return (parent.empty() ? std::filesystem::path(".") : parent) / "lchoc_cache";
}

// ---------------------------------------------------------------------------
// Reports

struct TermCounts {
    std::vector<std::size_t> imd3, imd5;
    double mean3() const { return mean(imd3); }
    double mean5() const { return mean(imd5); }

private:
    static double mean(const std::vector<std::size_t>& v) {
        double s = 0.0;
        for (auto x : v) s += static_cast<double>(x);
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    }
};

inline TermCounts count_terms(const std::vector<int>& indices) {
    TermCounts tc;
    for (int k = 0; k < static_cast<int>(indices.size()); ++k) {
        tc.imd3.push_back(enum_imd3(indices, k).size());
        tc.imd5.push_back(enum_imd5(indices, k).size());
    }
    return tc;
}

inline std::string report_terms(const ExperimentConfig& cfg) {
    const auto tc = count_terms(cfg.ofdm.used_indices);
    std::ostringstream os;
    os << "position  index  imd3  imd5  total(1+imd3+imd5)\n";
    std::size_t s3 = 0, s5 = 0;
    for (std::size_t k = 0; k < tc.imd3.size(); ++k) {
        char line[128];
        std::snprintf(line, sizeof line, "%8zu  %5d  %4zu  %4zu  %zu\n", k, cfg.ofdm.used_indices[k], tc.imd3[k], tc.imd5[k],
                      1 + tc.imd3[k] + tc.imd5[k]);
        os << line;
        s3 += tc.imd3[k];
        s5 += tc.imd5[k];
    }
    char tail[160];
    std::snprintf(tail, sizeof tail, "total     %5s  %4zu  %4zu\nmean      %5s  %4.1f  %4.1f\n", "", s3, s5, "", tc.mean3(),
                  tc.mean5());
    os << tail;
    return os.str();
}

struct AlphaRow {
    double ibo_db;
    double input_scale;
    BussgangGain gain;
};

inline std::vector<AlphaRow> alpha_table(const ExperimentConfig& cfg) {
    std::vector<AlphaRow> rows;
    for (double ibo : cfg.ibo_db) {
        const auto op = make_operating_point(cfg.pa, cfg.ofdm, ibo, cfg.alpha_samples, derive_seed(cfg.master_seed, SeedPurpose::alpha));
        rows.push_back({ibo, op.input_scale, op.bussgang});
    }
    return rows;
}

inline std::string report_alpha(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "pa " << describe(cfg.pa) << "\n";
    os << "ibo_db  input_scale   input_power   alpha_re      alpha_im      std_error\n";
    for (const auto& r : alpha_table(cfg)) {
        char line[200];
        std::snprintf(line, sizeof line, "%6.2f  %-12.6g  %-12.6g  %-12.8f  %-12.3e  %.3e\n", r.ibo_db, r.input_scale,
                      r.gain.input_power, r.gain.alpha.real(), r.gain.alpha.imag(), r.gain.std_error);
        os << line;
    }
    return os.str();
}

/// Full third-order combiner trained on noiseless, channel-free PA output at
/// the given back-off, reported per subcarrier.
inline std::vector<SparsityReport> run_sparsity(const ExperimentConfig& cfg, double ibo_db, std::size_t n_frames,
                                                CombinerCoefficients* full_out = nullptr) {
    const auto op = make_operating_point(cfg.pa, cfg.ofdm, ibo_db, cfg.alpha_samples, derive_seed(cfg.master_seed, SeedPurpose::alpha));
    const Transmitter tx(cfg.ofdm, op);
    const auto full = lchoc_train(tx, n_frames, derive_seed(cfg.master_seed, SeedPurpose::lchoc, 0xf3), CombinerKind::full3, cfg.ridge);
    std::vector<SparsityReport> reps;
    for (int k = 0; k < static_cast<int>(cfg.ofdm.n_used()); ++k) reps.push_back(sparsity_report(full, k));
    if (full_out) *full_out = full;
    return reps;
}

}  // namespace hoc
