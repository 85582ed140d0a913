#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <chrono>
#include <iostream>
#include <optional>
#include <set>

#include "cta/io.hpp"
#include "cta/phantoms.hpp"

namespace cta::scenario {

/// Malformed scenario text; carries the 1-based line.
struct ParseError : ConfigError {
    ParseError(const std::string& file, unsigned long line, const std::string& msg)
        : ConfigError(file + ":" + std::to_string(line) + ": " + msg), line(line) {}
    unsigned long line;
};

/// Well-formed text whose values break the schema; names the offending key.
struct ValidationError : ConfigError {
    ValidationError(const std::string& key, const std::string& msg) : ConfigError(key + ": " + msg), key(key) {}
    std::string key;
};

enum class Pipeline { synthesize, certify, reconstruct_dA, reconstruct_q, forward_check, all };

inline const std::vector<std::pair<std::string, Pipeline>>& pipeline_names() {
    static const std::vector<std::pair<std::string, Pipeline>> names = {
        {"synthesize", Pipeline::synthesize},         {"certify", Pipeline::certify},
        {"reconstruct-dA", Pipeline::reconstruct_dA}, {"reconstruct-q", Pipeline::reconstruct_q},
        {"forward-check", Pipeline::forward_check},   {"all", Pipeline::all}};
    return names;
}

inline std::string to_string(Pipeline p) {
    for (const auto& [n, v] : pipeline_names())
        if (v == p) return n;
    return "?";
}

enum class PhantomKind { zero, gradient, random_gradient, coulomb, product };

struct PhantomSpec {
    std::string name;
    PhantomKind kind = PhantomKind::zero;
    Profile1 profile;           // x1 profile of the longitudinal or scalar part
    Bump2 bump;                 // transversal bump
    Profile1 stream_profile;    // coulomb: x1 profile of the solenoidal part
    Bump2 stream_bump;          // coulomb: stream function
    int count = 0;              // random_gradient
    double radius_max = 0.0;    // random_gradient

    bool is_form() const { return kind == PhantomKind::gradient || kind == PhantomKind::random_gradient || kind == PhantomKind::coulomb || kind == PhantomKind::zero; }
    bool is_scalar() const { return kind == PhantomKind::product || kind == PhantomKind::zero; }
    bool is_exact() const { return kind == PhantomKind::gradient || kind == PhantomKind::random_gradient || kind == PhantomKind::zero; }
};

struct Tolerances {
    std::map<std::string, double> values = {
        {"vanishing_rel", 1e-4},      {"dphi_rel_l2", 0.10},      {"phi_boundary_rel", 1e-3},
        {"dA_rel_l2", 0.15},          {"q_rel_l2", 0.10},         {"gauge_ratio", 2.0},
        {"neumann_discrepancy", 0.05}, {"transport_residual", 1e-3}, {"pair_cancellation", 1e-3}};
    double at(const std::string& k) const { return values.at(k); }
};

struct Scenario {
    std::string source;  // file path, for messages
    std::string text;    // verbatim input, echoed into the outputs
    std::string name;
    Pipeline pipeline = Pipeline::synthesize;
    std::uint64_t seed = 0;
    std::string output_dir;
    std::string magnetic, electric, gauge;  // phantom names, empty if unused

    DomainKind domain = DomainKind::disk;
    double size = 1.0;  // disk radius or square side
    int chart_nodes = 32;
    int x1_nodes = 33;
    double x1_half_width = 2.0;
    std::string metric = "euclidean";
    double metric_amplitude = 0.0, metric_width = 1.0;
    std::string conformal = "one";
    double conformal_amplitude = 0.0, conformal_x1_width = 1.0, conformal_radius = 1.0;
    Vec2 conformal_center{0.0, 0.0};

    int boundary_points = 64, directions = 32;
    double eps_tan = 1e-3, step = 0.0;

    int lambda_points = 17;
    double lambda_max = -1.0;

    int transport_nodes = 128;

    std::map<std::string, PhantomSpec> phantoms;
    Tolerances tol;
};

namespace detail {

using boost::property_tree::ptree;

/// Read access to one INI section that remembers which keys were used.
class Section {
public:
    Section(std::string name, const ptree* t) : name_(std::move(name)), t_(t) {}

    bool present() const { return t_ != nullptr; }
    const std::string& name() const { return name_; }

    std::optional<std::string> raw(const std::string& k) {
        used_.insert(k);
        if (!t_) return std::nullopt;
        const auto v = t_->get_optional<std::string>(ptree::path_type(k, '\0'));
        return v ? std::optional<std::string>(*v) : std::nullopt;
    }

    std::string text(const std::string& k, const std::string& def) {
        const auto v = raw(k);
        return v ? *v : def;
    }
    std::string required_text(const std::string& k) {
        const auto v = raw(k);
        if (!v || v->empty()) throw ValidationError(key(k), "required key is missing");
        return *v;
    }

    double real(const std::string& k, double def) {
        const auto v = raw(k);
        return v ? parse_real(k, *v) : def;
    }
    double required_real(const std::string& k) {
        const auto v = raw(k);
        if (!v) throw ValidationError(key(k), "required key is missing");
        return parse_real(k, *v);
    }

    long integer(const std::string& k, long def) {
        const auto v = raw(k);
        if (!v) return def;
        long x = 0;
        const auto r = std::from_chars(v->data(), v->data() + v->size(), x);
        if (r.ec != std::errc() || r.ptr != v->data() + v->size())
            throw ValidationError(key(k), "expected an integer, got '" + *v + "'");
        return x;
    }

    //! every key the schema did not ask for is an error
    void finish() const {
        if (!t_) return;
        for (const auto& [k, child] : *t_)
            if (!used_.count(k)) throw ValidationError(key(k), "unknown key");
    }

    std::string key(const std::string& k) const { return name_ + "." + k; }

private:
    double parse_real(const std::string& k, const std::string& s) const {
        double x = 0.0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(x))
            throw ValidationError(key(k), "expected a number, got '" + s + "'");
        return x;
    }

    std::string name_;
    const ptree* t_;
    std::set<std::string> used_;
};

inline const ptree* section(const ptree& root, const std::string& name) {
    const auto it = root.find(name);
    return it == root.not_found() ? nullptr : &it->second;
}

inline Profile1 read_profile(Section& s, const std::string& prefix) {
    Profile1 p;
    p.center = s.real(prefix + "x1_center_len", 0.0);
    p.width = s.required_real(prefix + "x1_width_len");
    p.amp = s.real(prefix + "x1_amp", 1.0);
    const std::string shape = s.text(prefix + "x1_profile", "compact");
    if (shape != "compact" && shape != "gaussian")
        throw ValidationError(s.key(prefix + "x1_profile"), "expected compact or gaussian, got '" + shape + "'");
    p.compact = shape == "compact";
    if (!(p.width > 0.0)) throw ValidationError(s.key(prefix + "x1_width_len"), "must be positive");
    return p;
}

inline Bump2 read_bump(Section& s, const std::string& prefix) {
    Bump2 b;
    b.center = {s.real(prefix + "center_x_len", 0.0), s.real(prefix + "center_y_len", 0.0)};
    b.radius = s.required_real(prefix + "radius_len");
    b.amp = s.real(prefix + "amp", 1.0);
    if (!(b.radius > 0.0)) throw ValidationError(s.key(prefix + "radius_len"), "must be positive");
    return b;
}

inline PhantomSpec read_phantom(Section& s, const std::string& name) {
    PhantomSpec p;
    p.name = name;
    const std::string kind = s.required_text("kind");
    if (kind == "zero") {
        p.kind = PhantomKind::zero;
    } else if (kind == "gradient" || kind == "product") {
        p.kind = kind == "gradient" ? PhantomKind::gradient : PhantomKind::product;
        p.profile = read_profile(s, "");
        p.bump = read_bump(s, "bump_");
    } else if (kind == "coulomb") {
        p.kind = PhantomKind::coulomb;
        p.profile = read_profile(s, "");
        p.bump = read_bump(s, "bump_");
        p.stream_profile = read_profile(s, "stream_");
        p.stream_bump = read_bump(s, "stream_bump_");
    } else if (kind == "random_gradient") {
        p.kind = PhantomKind::random_gradient;
        p.profile = read_profile(s, "");
        p.count = int(s.integer("count", 3));
        p.radius_max = s.required_real("radius_max_len");
        if (p.count < 1) throw ValidationError(s.key("count"), "must be at least 1");
        if (!(p.radius_max > 0.0)) throw ValidationError(s.key("radius_max_len"), "must be positive");
    } else {
        throw ValidationError(s.key("kind"),
                              "unknown phantom kind '" + kind + "' (zero, gradient, random_gradient, coulomb, product)");
    }
    s.finish();
    return p;
}

//! x1 extent where a profile is not negligible
inline double x1_reach(const Profile1& p) { return std::abs(p.center) + p.extent(); }

inline void check_x1_support(const PhantomSpec& p, const std::string& who, double a) {
    auto check = [&](const Profile1& pr, const std::string& prefix) {
        if (x1_reach(pr) > a)
            throw ValidationError(who + "." + prefix + "x1_width_len",
                                  "support violation: the x1 profile reaches |x1| = " + io::num(x1_reach(pr)) +
                                      " but phantoms must be compactly supported inside (-a, a) with a = " + io::num(a) +
                                      "; the x1 Fourier reduction and the antiderivative potential require it");
    };
    if (p.kind == PhantomKind::zero) return;
    check(p.profile, "");
    if (p.kind == PhantomKind::coulomb) check(p.stream_profile, "stream_");
}

inline bool bump_inside(const Scenario& s, const Bump2& b) {
    if (s.domain == DomainKind::disk) return norm(b.center) + b.radius <= s.size;
    const double half = 0.5 * s.size;
    return std::abs(b.center.x) + b.radius <= half && std::abs(b.center.y) + b.radius <= half;
}

inline void check_transversal_support(const Scenario& s, const PhantomSpec& p, const std::string& who) {
    auto check = [&](const Bump2& b, const std::string& prefix) {
        if (!bump_inside(s, b))
            throw ValidationError(who + "." + prefix + "radius_len",
                                  "support violation: the bump leaves the chart domain; phantoms must vanish on its boundary");
    };
    if (p.kind == PhantomKind::gradient || p.kind == PhantomKind::coulomb || p.kind == PhantomKind::product)
        check(p.bump, "bump_");
    if (p.kind == PhantomKind::coulomb) check(p.stream_bump, "stream_bump_");
    if (p.kind == PhantomKind::random_gradient && s.domain == DomainKind::disk && p.radius_max > s.size)
        throw ValidationError(who + ".radius_max_len", "support violation: exceeds the disk radius");
    if (p.kind == PhantomKind::random_gradient && s.domain == DomainKind::square && p.radius_max > 0.5 * s.size)
        throw ValidationError(who + ".radius_max_len", "support violation: exceeds the inscribed disk of the square");
}

}  // namespace detail

inline bool needs_recovery_grid(Pipeline p) { return p != Pipeline::forward_check; }

/// Schema and cross-reference checks. No computation.
inline void validate(const Scenario& s) {
    auto positive = [](const std::string& key, double v) {
        if (!(v > 0.0)) throw ValidationError(key, "must be positive, got " + io::num(v));
    };
    if (s.chart_nodes < 5) throw ValidationError("geometry.chart_nodes", "resolution must be at least 5, got " + std::to_string(s.chart_nodes));
    if (s.x1_nodes < 3) throw ValidationError("geometry.x1_nodes", "resolution must be at least 3, got " + std::to_string(s.x1_nodes));
    positive(s.domain == DomainKind::disk ? "geometry.radius_len" : "geometry.side_len", s.size);
    positive("geometry.x1_half_width_len", s.x1_half_width);
    if (s.metric == "conformal_gaussian") positive("geometry.metric_width_len", s.metric_width);
    if (s.conformal == "bump") {
        if (!(std::abs(s.conformal_amplitude) < 1.0))
            throw ValidationError("geometry.conformal_amplitude", "must lie in (-1, 1) so the factor stays positive");
        positive("geometry.conformal_x1_width_len", s.conformal_x1_width);
        positive("geometry.conformal_radius_len", s.conformal_radius);
    }
    if (s.boundary_points < 1) throw ValidationError("rays.boundary_points", "must be at least 1");
    if (s.directions < 1) throw ValidationError("rays.directions", "must be at least 1");
    positive("rays.eps_tan", s.eps_tan);
    if (s.step < 0.0) throw ValidationError("rays.step_len", "must be positive (or omitted)");
    if (s.lambda_points < 1 || s.lambda_points % 2 == 0)
        throw ValidationError("lambda.points", "must be a positive odd count, got " + std::to_string(s.lambda_points));
    {
        // the DFT grid k pi / a must stay within half the x1 Nyquist frequency
        const int kmax = (s.lambda_points - 1) / 2;
        const double h1 = 2.0 * s.x1_half_width / (s.x1_nodes - 1);
        if (kmax * pi / s.x1_half_width > 0.5 * pi / h1 + 1e-12)
            throw ValidationError("lambda.points", "too many lambda points for geometry.x1_nodes = " + std::to_string(s.x1_nodes));
        if (s.lambda_max >= 0.0 && kmax * pi / s.x1_half_width > s.lambda_max * (1.0 + 1e-12))
            throw ValidationError("lambda.max_per_len", "the grid k pi / a reaches " + io::num(kmax * pi / s.x1_half_width) +
                                                             ", above the requested bound");
    }
    if (s.transport_nodes < 16) throw ValidationError("forward.transport_nodes", "resolution must be at least 16");
    for (const auto& [k, v] : s.tol.values) positive("tolerances." + k, v);

    auto ref = [&](const std::string& key, const std::string& name, bool want_form) -> const PhantomSpec* {
        if (name.empty()) return nullptr;
        const auto it = s.phantoms.find(name);
        if (it == s.phantoms.end()) throw ValidationError(key, "phantom '" + name + "' is not defined (no [phantom:" + name + "] section)");
        if (want_form && !it->second.is_form()) throw ValidationError(key, "phantom '" + name + "' is a scalar, a 1-form is required");
        if (!want_form && !it->second.is_scalar()) throw ValidationError(key, "phantom '" + name + "' is a 1-form, a scalar is required");
        return &it->second;
    };
    const PhantomSpec* A = ref("scenario.magnetic", s.magnetic, true);
    const PhantomSpec* Q = ref("scenario.electric", s.electric, false);
    const PhantomSpec* P = ref("scenario.gauge", s.gauge, false);

    const Pipeline p = s.pipeline;
    if (p == Pipeline::synthesize && !A && !Q) throw ValidationError("scenario.magnetic", "synthesize needs a magnetic or an electric phantom");
    if (p == Pipeline::certify && !A) throw ValidationError("scenario.magnetic", "certify needs a magnetic phantom");
    if (p == Pipeline::certify && !A->is_exact())
        throw ValidationError("scenario.magnetic", "certify needs an exact form (kind gradient or random_gradient)");
    if (p == Pipeline::reconstruct_dA && !A) throw ValidationError("scenario.magnetic", "reconstruct-dA needs a magnetic phantom");
    if (p == Pipeline::reconstruct_q && !Q) throw ValidationError("scenario.electric", "reconstruct-q needs an electric phantom");
    if (p == Pipeline::all && !A && !Q) throw ValidationError("scenario.magnetic", "all needs a magnetic or an electric phantom");
    if (p == Pipeline::forward_check) {
        if (s.domain != DomainKind::square) throw ValidationError("geometry.domain", "forward-check runs on the cube and needs domain = square");
        if (!P) throw ValidationError("scenario.gauge", "forward-check needs a gauge phantom");
    }

    const double a_rec = s.x1_half_width, a_cube = 0.5 * s.size;
    const bool forward = p == Pipeline::forward_check || (p == Pipeline::all && P && s.domain == DomainKind::square);
    for (const PhantomSpec* spec : {A, Q, P}) {
        if (!spec) continue;
        const std::string who = "phantom:" + spec->name;
        detail::check_transversal_support(s, *spec, who);
        if (needs_recovery_grid(p) && spec != P) detail::check_x1_support(*spec, who, a_rec);
        if (forward) detail::check_x1_support(*spec, who, a_cube);
    }
}

/// Parse scenario text. Syntax errors carry the line; schema errors the key.
inline Scenario parse(const std::string& text, const std::string& source = "<scenario>") {
    namespace pt = boost::property_tree;
    pt::ptree root;
    try {
        std::istringstream in(text);
        pt::ini_parser::read_ini(in, root);
    } catch (const pt::ini_parser_error& e) {
        throw ParseError(source, e.line(), e.message());
    }
    for (const auto& [k, child] : root)
        if (child.empty() && !child.data().empty())
            throw ValidationError(k, "keys must belong to a [section]");

    Scenario s;
    s.source = source;
    s.text = text;
    using detail::Section;
    std::set<std::string> known = {"scenario", "geometry", "rays", "lambda", "tolerances", "forward"};

    Section sc("scenario", detail::section(root, "scenario"));
    if (!sc.present()) throw ValidationError("scenario", "missing [scenario] section");
    s.name = sc.required_text("name");
    const std::string pipe = sc.required_text("pipeline");
    bool found = false;
    for (const auto& [n, v] : pipeline_names())
        if (n == pipe) s.pipeline = v, found = true;
    if (!found)
        throw ValidationError("scenario.pipeline", "unknown pipeline '" + pipe +
                                                       "' (synthesize, certify, reconstruct-dA, reconstruct-q, forward-check, all)");
    const long seed = sc.integer("seed", 0);
    if (seed < 0) throw ValidationError("scenario.seed", "must be nonnegative");
    s.seed = std::uint64_t(seed);
    s.output_dir = sc.text("output_dir", "out/" + s.name);
    s.magnetic = sc.text("magnetic", "");
    s.electric = sc.text("electric", "");
    s.gauge = sc.text("gauge", "");
    sc.finish();

    Section ge("geometry", detail::section(root, "geometry"));
    const std::string dom = ge.text("domain", "disk");
    if (dom == "disk") {
        s.domain = DomainKind::disk;
        s.size = ge.real("radius_len", 1.0);
    } else if (dom == "square") {
        s.domain = DomainKind::square;
        s.size = ge.real("side_len", 2.0);
    } else {
        throw ValidationError("geometry.domain", "expected disk or square, got '" + dom + "'");
    }
    s.chart_nodes = int(ge.integer("chart_nodes", 32));
    s.x1_nodes = int(ge.integer("x1_nodes", 33));
    s.x1_half_width = ge.real("x1_half_width_len", 2.0);
    s.metric = ge.text("metric", "euclidean");
    if (s.metric != "euclidean" && s.metric != "conformal_gaussian")
        throw ValidationError("geometry.metric", "expected euclidean or conformal_gaussian, got '" + s.metric + "'");
    if (s.metric == "conformal_gaussian") {
        s.metric_amplitude = ge.required_real("metric_amplitude");
        s.metric_width = ge.required_real("metric_width_len");
    }
    s.conformal = ge.text("conformal", "one");
    if (s.conformal != "one" && s.conformal != "bump")
        throw ValidationError("geometry.conformal", "expected one or bump, got '" + s.conformal + "'");
    if (s.conformal == "bump") {
        s.conformal_amplitude = ge.required_real("conformal_amplitude");
        s.conformal_x1_width = ge.required_real("conformal_x1_width_len");
        s.conformal_center = {ge.real("conformal_center_x_len", 0.0), ge.real("conformal_center_y_len", 0.0)};
        s.conformal_radius = ge.required_real("conformal_radius_len");
    }
    ge.finish();

    Section ra("rays", detail::section(root, "rays"));
    s.boundary_points = int(ra.integer("boundary_points", 64));
    s.directions = int(ra.integer("directions", 32));
    s.eps_tan = ra.real("eps_tan", 1e-3);
    s.step = ra.real("step_len", 0.0);
    ra.finish();

    Section la("lambda", detail::section(root, "lambda"));
    s.lambda_points = int(la.integer("points", 17));
    s.lambda_max = la.real("max_per_len", -1.0);
    la.finish();

    Section fw("forward", detail::section(root, "forward"));
    s.transport_nodes = int(fw.integer("transport_nodes", 128));
    fw.finish();

    Section to("tolerances", detail::section(root, "tolerances"));
    for (auto& [k, v] : s.tol.values) v = to.real(k, v);
    to.finish();

    for (const auto& [k, child] : root) {
        if (known.count(k)) continue;
        if (k.rfind("phantom:", 0) == 0) {
            const std::string name = k.substr(8);
            if (name.empty()) throw ValidationError(k, "phantom section needs a name");
            Section ph(k, &child);
            s.phantoms[name] = detail::read_phantom(ph, name);
            continue;
        }
        throw ValidationError(k, "unknown section");
    }
    return s;
}

inline Scenario load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read scenario file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    Scenario s = parse(ss.str(), path);
    validate(s);
    return s;
}

// ------------------------------------------------------------ running

struct Check {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool passed() const { return value <= tolerance; }
};

struct RunOptions {
    std::string out_dir;  // overrides the scenario when nonempty
    unsigned workers = 1;
    double tol_scale = 1.0;
    std::ostream* log = nullptr;
};

struct RunResult {
    std::filesystem::path out_dir;
    std::map<std::string, double> metrics;
    std::map<std::string, double> tolerances;
    std::vector<Check> checks;
    std::vector<std::string> notes;

    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed()) return false;
        return true;
    }
};

inline MetricChart make_chart(const Scenario& s) {
    MetricFn g0 = metrics::euclidean();
    bool flat = true;
    if (s.metric == "conformal_gaussian") {
        g0 = metrics::conformal_gaussian(s.metric_amplitude, s.metric_width);
        flat = s.metric_amplitude == 0.0;
    }
    MetricChart c = s.domain == DomainKind::disk ? MetricChart::disk(s.size, s.chart_nodes, g0, flat)
                                                 : MetricChart::square(s.size, s.chart_nodes, g0, flat);
    if (s.conformal == "bump") {
        const Profile1 g{0.0, s.conformal_x1_width, 1.0, true};
        const Bump2 b{s.conformal_center, s.conformal_radius, 1.0};
        const double amp = s.conformal_amplitude;
        c.conformal = [=](double x1, Vec2 x) { return 1.0 + amp * g(x1) * b(x); };
    }
    return c;
}

inline OneForm3 make_form(const Scenario& s, const PhantomSpec& p, const Grid3& G, const MetricChart& chart) {
    switch (p.kind) {
        case PhantomKind::zero: return OneForm3::zeros(G);
        case PhantomKind::gradient: return phantoms::gradient(G, p.profile, p.bump);
        case PhantomKind::coulomb:
            return phantoms::coulomb(G, chart, p.profile, p.bump, p.stream_profile, p.stream_bump);
        case PhantomKind::random_gradient: {
            Rng rng(s.seed);
            const auto bumps = random_bumps(rng, p.count, p.radius_max);
            ScalarField3 phi = ScalarField3::zeros(G);
            for (const auto& b : bumps) {
                const auto part = phantoms::product_scalar(G, p.profile, b);
                for (std::size_t n = 0; n < phi.v.size(); ++n) phi.v[n] += part.v[n];
            }
            return exterior_d(phi);
        }
        case PhantomKind::product: break;
    }
    throw std::logic_error("make_form: scalar phantom");
}

inline ScalarField3 make_scalar(const PhantomSpec& p, const Grid3& G) {
    if (p.kind == PhantomKind::zero) return ScalarField3::zeros(G);
    if (p.kind != PhantomKind::product) throw std::logic_error("make_scalar: form phantom");
    return phantoms::product_scalar(G, p.profile, p.bump);
}

namespace detail {

inline std::string index2(std::size_t k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02zu", k);
    return buf;
}

/// State shared by the stages of one run.
struct Runner {
    const Scenario& s;
    const RunOptions& opt;
    io::ArtifactSet& out;
    RunResult& res;
    MetricChart chart;
    Grid3 G;
    std::optional<RaySet> rays;
    std::optional<RayQuadrature> Q;
    std::vector<double> lambdas;

    void log(const std::string& msg) const {
        if (opt.log) *opt.log << msg << std::endl;
    }
    double tol(const std::string& k) {
        const double t = s.tol.at(k) * opt.tol_scale;
        res.tolerances[k] = t;
        return t;
    }
    void check(const std::string& name, double value, const std::string& tol_key) {
        res.checks.push_back({name, value, tol(tol_key)});
    }
    void metrics(const std::string& stage, const std::map<std::string, double>& m) {
        for (const auto& [k, v] : m) res.metrics[stage + "." + k] = v;
    }

    void ensure_rays() {
        if (rays) return;
        rays = sample_inflow_boundary(chart, s.boundary_points, s.directions, s.eps_tan, s.step, opt.workers);
        if (rays->size() == 0) throw ConfigError("rays: every sampled ray was dropped");
        Q = build_quadrature(chart, *rays, opt.workers);
        lambdas = dft_lambda_grid(G, s.lambda_points);
        res.metrics["rays.count"] = double(rays->size());
        res.metrics["rays.dropped_trapped"] = rays->dropped_trapped;
        res.metrics["rays.dropped_tangential"] = rays->dropped_tangential;
        out.write("rays.csv", io::rays_csv(*rays));
    }

    OneForm3 magnetic() { return make_form(s, s.phantoms.at(s.magnetic), G, chart); }
    ScalarField3 electric() { return make_scalar(s.phantoms.at(s.electric), G); }

    void synthesize() {
        ensure_rays();
        if (!s.magnetic.empty()) {
            const auto A = magnetic();
            const auto D = synthesize_data(A, *Q, lambdas, opt.workers);
            out.write("sinogram_magnetic.csv", io::sinogram_csv(D));
            out.write_raster("sinogram_magnetic", io::sinogram_raster(D));
            const double amax = std::max({max_abs(A.a1), max_abs(A.a2), max_abs(A.a3)});
            res.metrics["synthesize.magnetic_data_max_abs"] = D.max_abs();
            res.metrics["synthesize.magnetic_potential_max_abs"] = amax;
            res.metrics["synthesize.magnetic_slice_symmetry_defect"] = fourier_reduce(A, lambdas).conjugate_symmetry_defect();
            if (s.phantoms.at(s.magnetic).is_exact()) {
                const double scale = amax * chart.diameter();
                check("synthesize.vanishing_rel", scale > 0.0 ? D.max_abs() / scale : D.max_abs(), "vanishing_rel");
            }
        }
        if (!s.electric.empty()) {
            const auto q = electric();
            const auto D = synthesize_q_data(q, chart, *Q, lambdas, opt.workers);
            out.write("sinogram_electric.csv", io::sinogram_csv(D));
            out.write_raster("sinogram_electric", io::sinogram_raster(D));
            res.metrics["synthesize.electric_data_max_abs"] = D.max_abs();
        }
    }

    void certify() {
        ensure_rays();
        const auto A = magnetic();
        CertifyOptions co;
        co.workers = opt.workers;
        const auto D = synthesize_data(A, *Q, lambdas, opt.workers);
        const auto rep = certify_uniqueness(D, *Q, chart, A, co);
        metrics("certify", rep.metrics);
        check("certify.dphi_rel_l2", rep.metrics.at("dphi_rel_l2"), "dphi_rel_l2");
        check("certify.phi_boundary_rel", rep.metrics.at("phi_boundary_rel"), "phi_boundary_rel");
        out.write("certify_phi.csv", io::field_csv(rep.phi));
        out.write_raster("certify_phi_x1mid", io::magnitude_raster(rep.phi, G.n1 / 2, "|phi| on the x1 = 0 layer"));
        for (std::size_t l = 0; l < rep.p.size(); ++l)
            out.write("certify_p" + index2(l) + ".csv", io::field_csv(rep.p[l]));
    }

    void per_lambda(const std::string& stage, const RecoveryReport& rep) {
        for (std::size_t l = 0; l < rep.per_lambda.size(); ++l) {
            const auto& d = rep.per_lambda[l];
            const std::string k = stage + ".lambda" + index2(l) + ".";
            res.metrics[k + "lambda"] = d.lambda;
            res.metrics[k + "condition"] = d.condition;
            res.metrics[k + "data_residual"] = d.data_residual;
            res.metrics[k + "reg"] = d.reg;
        }
    }

    void reconstruct_dA_stage() {
        ensure_rays();
        const auto A = magnetic();
        ReconstructOptions ro;
        ro.workers = opt.workers;
        const auto D = synthesize_data(A, *Q, lambdas, opt.workers);
        const auto rep = reconstruct_dA(D, *Q, chart, G, &A, ro);
        metrics("reconstruct_dA", rep.metrics);
        per_lambda("reconstruct_dA", rep);
        check("reconstruct_dA.dA_rel_l2_max", rep.metrics.at("dA_rel_l2_max"), "dA_rel_l2");
        out.write("dA.csv", io::form_csv(rep.dA));
        out.write_raster("dA_f23_x1mid", io::f23_raster(rep.dA, G.n1 / 2, "|dA_23| on the x1 = 0 layer"));
        out.write_raster("dA_reference_f23_x1mid",
                         io::f23_raster(exterior_d(A), G.n1 / 2, "|dA_23| of the phantom on the x1 = 0 layer"));
        if (!s.gauge.empty()) {
            const auto p = make_scalar(s.phantoms.at(s.gauge), G);
            const OneForm3 Ag = A + exterior_d(p);
            const auto rg = reconstruct_dA(synthesize_data(Ag, *Q, lambdas, opt.workers), *Q, chart, G, &Ag, ro);
            metrics("reconstruct_dA_gauged", rg.metrics);
            double worst = 0.0;
            for (const char* k : {"dA_f12_rel_l2", "dA_f13_rel_l2", "dA_f23_rel_l2"}) {
                const double b = rep.metrics.at(k);
                worst = std::max(worst, b > 0.0 ? rg.metrics.at(k) / b : rg.metrics.at(k));
            }
            check("reconstruct_dA.gauge_ratio", worst, "gauge_ratio");
        }
    }

    void reconstruct_q_stage() {
        ensure_rays();
        const auto q = electric();
        ReconstructOptions ro;
        ro.workers = opt.workers;
        const auto D = synthesize_q_data(q, chart, *Q, lambdas, opt.workers);
        const auto rep = reconstruct_q(D, *Q, chart, G, &q, ro);
        metrics("reconstruct_q", rep.metrics);
        per_lambda("reconstruct_q", rep);
        check("reconstruct_q.q_rel_l2", rep.metrics.at("q_rel_l2"), "q_rel_l2");
        out.write("q.csv", io::field_csv(rep.q));
        out.write_raster("q_x1mid", io::magnitude_raster(rep.q, G.n1 / 2, "|q~| on the x1 = 0 layer"));
    }

    void forward_check() {
        const Grid3 C = cube_grid(chart);
        const OneForm3 A = s.magnetic.empty() ? OneForm3::zeros(C) : make_form(s, s.phantoms.at(s.magnetic), C, chart);
        const ScalarField3 q = s.electric.empty() ? ScalarField3::zeros(C) : make_scalar(s.phantoms.at(s.electric), C);
        const ScalarField3 p = make_scalar(s.phantoms.at(s.gauge), C);
        const ScalarField3 bv = sample_nodes3(C, [](double x1, Vec2 x) {
            return std::exp(0.5 * x1) * std::cos(x.x) * cplx(1.0, 0.3 * x.y);
        });
        const auto rep = gauge_equiv_check(A, q, p, bv, chart);
        res.metrics["forward.interior_discrepancy"] = rep.interior_discrepancy;
        res.metrics["forward.neumann_discrepancy"] = rep.neumann_discrepancy;
        res.metrics["forward.dirichlet_discrepancy"] = rep.dirichlet_discrepancy;
        res.metrics["forward.residual_a"] = rep.residual_a;
        res.metrics["forward.residual_b"] = rep.residual_b;
        check("forward.neumann_discrepancy", rep.neumann_discrepancy, "neumann_discrepancy");
        const auto ua = solve_dirichlet(A, q, bv, chart).u;
        const OneForm3 Ag = A + exterior_d(p);
        const auto ub = solve_dirichlet(Ag, q, bv, chart).u;
        out.write("cauchy_A.csv", io::cauchy_csv(magnetic_neumann(ua, A, chart), C));
        out.write("cauchy_A_gauged.csv", io::cauchy_csv(magnetic_neumann(ub, Ag, chart), C));

        // transport amplitudes along one ray entering at the middle of the left side
        const Vec2 x0 = boundary_point(chart, 0.875);
        const Vec2 xi = inflow_direction(chart, x0, 0.15);
        const auto path = trace_geodesic(chart, x0, xi, 0.25 * chart.grid.h);
        const auto pair = solve_amplitudes(A, path, s.transport_nodes, s.transport_nodes);
        res.metrics["forward.transport_residual1"] = pair.residual1;
        res.metrics["forward.transport_residual2"] = pair.residual2;
        res.metrics["forward.pair_cancellation"] = pair.cancellation;
        check("forward.transport_residual", std::max(pair.residual1, pair.residual2), "transport_residual");
        check("forward.pair_cancellation", pair.cancellation, "pair_cancellation");
        out.write("transport_phi1.csv", io::amplitude_csv(pair.phi1));
        out.write_raster("transport_phi1", io::amplitude_raster(pair.phi1, "|Phi1(x1, t)|"));
    }
};

inline std::string report_text(const Scenario& s, const RunOptions& opt, const RunResult& r) {
    std::ostringstream o;
    o << "[scenario]\n"
      << "name = " << s.name << "\n"
      << "pipeline = " << to_string(s.pipeline) << "\n"
      << "seed = " << s.seed << "\n"
      << "tol_scale = " << io::num(opt.tol_scale) << "\n";
    o << "\n[metrics]\n";
    for (const auto& [k, v] : r.metrics) o << k << " = " << io::num(v) << "\n";
    o << "\n[tolerances]\n";
    for (const auto& [k, v] : r.tolerances) o << k << " = " << io::num(v) << "\n";
    o << "\n[checks]\n";
    for (const auto& c : r.checks)
        o << c.name << " = " << io::num(c.value) << " <= " << io::num(c.tolerance) << " " << (c.passed() ? "PASS" : "FAIL")
          << "\n";
    if (!r.notes.empty()) {
        o << "\n[notes]\n";
        for (std::size_t k = 0; k < r.notes.size(); ++k) o << "note" << index2(k) << " = " << r.notes[k] << "\n";
    }
    return o.str();
}

}  // namespace detail

/// Execute the selected pipeline and write every artifact plus the manifest.
inline RunResult run(const Scenario& s, const RunOptions& opt = {}) {
    validate(s);
    if (!(opt.tol_scale > 0.0)) throw ValidationError("--tol-scale", "must be positive");
    RunResult res;
    res.out_dir = opt.out_dir.empty() ? std::filesystem::path(s.output_dir) : std::filesystem::path(opt.out_dir);
    io::ArtifactSet out(res.out_dir);
    default_workers() = std::max(1u, opt.workers);

    detail::Runner r{s, opt, out, res, make_chart(s), {}, {}, {}, {}};
    r.G = Grid3::make(s.x1_nodes, s.x1_half_width, r.chart.grid);
    out.write("scenario.ini", s.text);

    auto stage = [&](const char* name, auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        r.log(std::string("stage ") + name + " ...");
        fn();
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", secs);
        r.log(std::string("stage ") + name + " done in " + buf + " s");
    };
    const Pipeline p = s.pipeline;
    const bool all = p == Pipeline::all;
    if (p == Pipeline::synthesize || all) stage("synthesize", [&] { r.synthesize(); });
    if (p == Pipeline::certify || (all && !s.magnetic.empty() && s.phantoms.at(s.magnetic).is_exact()))
        stage("certify", [&] { r.certify(); });
    if (p == Pipeline::reconstruct_dA || (all && !s.magnetic.empty())) stage("reconstruct-dA", [&] { r.reconstruct_dA_stage(); });
    if (p == Pipeline::reconstruct_q || (all && !s.electric.empty())) stage("reconstruct-q", [&] { r.reconstruct_q_stage(); });
    if (p == Pipeline::forward_check || (all && !s.gauge.empty() && s.domain == DomainKind::square))
        stage("forward-check", [&] { r.forward_check(); });
    if (all && (s.gauge.empty() || s.domain != DomainKind::square))
        res.notes.push_back("forward-check skipped: it needs domain = square and a gauge phantom");

    out.write("report.txt", detail::report_text(s, opt, res));
    out.write_manifest();
    return res;
}

// ------------------------------------------------------------ reading reports

struct ReportSummary {
    std::map<std::string, std::string> scenario;
    std::vector<std::pair<std::string, std::string>> checks;  // name, line text
    std::size_t failed = 0;
};

inline ReportSummary read_report(const std::filesystem::path& dir) {
    std::istringstream in(io::read_file(dir / "report.txt"));
    ReportSummary out;
    std::string line, sec;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.front() == '[') {
            sec = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        const std::string k = line.substr(0, eq), v = line.substr(eq + 3);
        if (sec == "scenario") out.scenario[k] = v;
        if (sec == "checks") {
            out.checks.emplace_back(k, v);
            if (v.size() >= 4 && v.compare(v.size() - 4, 4, "FAIL") == 0) ++out.failed;
        }
    }
    return out;
}

}  // namespace cta::scenario
