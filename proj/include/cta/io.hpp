#pragma once

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cta/recovery.hpp"
#include "cta/schrodinger.hpp"
#include "cta/transport.hpp"

namespace cta {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace io {

//! round-trip text of a double (17 significant digits); identical bytes for identical values
inline std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

//! compact text for logs and terminal output
inline std::string short_num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw IoError("sha256: digest failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ------------------------------------------------------------ CSV

/// Minimal CSV builder: a header row, then rows of already formatted cells.
class Csv {
public:
    explicit Csv(std::initializer_list<const char*> cols) {
        bool first = true;
        for (const char* c : cols) {
            text_ += first ? "" : ",";
            text_ += c;
            first = false;
        }
        text_ += '\n';
        ncols_ = cols.size();
    }

    template <class... T>
    void row(const T&... cells) {
        static_assert(sizeof...(T) > 0);
        if (sizeof...(T) != ncols_) throw std::logic_error("Csv::row: column count mismatch");
        bool first = true;
        ((text_ += (first ? "" : ","), text_ += cell(cells), first = false), ...);
        text_ += '\n';
    }

    const std::string& str() const { return text_; }

private:
    static std::string cell(double x) { return num(x); }
    static std::string cell(int x) { return std::to_string(x); }
    static std::string cell(std::size_t x) { return std::to_string(x); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }

    std::string text_;
    std::size_t ncols_ = 0;
};

inline std::string rays_csv(const RaySet& rays) {
    Csv c({"ray_id", "x", "y", "xi_x", "xi_y", "tau", "nontangential"});
    for (std::size_t r = 0; r < rays.size(); ++r) {
        const Ray& e = rays.entries[r];
        c.row(r, e.x.x, e.x.y, e.xi.x, e.xi.y, e.path.exit_time, e.path.nontangential ? 1 : 0);
    }
    return c.str();
}

inline std::string sinogram_csv(const Sinogram& D) {
    Csv c({"lambda", "ray_id", "re", "im"});
    for (std::size_t l = 0; l < D.n_lambda(); ++l)
        for (std::size_t r = 0; r < D.values[l].size(); ++r)
            c.row(D.lambda_grid[l], r, D.values[l][r].real(), D.values[l][r].imag());
    return c.str();
}

inline std::string field_csv(const ScalarField0& f) {
    Csv c({"i", "j", "x", "y", "re", "im"});
    const Grid2& g = f.grid;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const Vec2 p = g.node_pos(i, j);
            const cplx z = f.v[g.node(i, j)];
            c.row(i, j, p.x, p.y, z.real(), z.imag());
        }
    return c.str();
}

inline std::string field_csv(const ScalarField3& f) {
    Csv c({"m", "i", "j", "x1", "x", "y", "re", "im"});
    const Grid3& G = f.grid;
    const Grid2& g = G.chart;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m) {
                const Vec2 p = g.node_pos(i, j);
                const cplx z = f.v[G.node(m, g.node(i, j))];
                c.row(m, i, j, G.x1(m), p.x, p.y, z.real(), z.imag());
            }
    return c.str();
}

//! one row per element; (x1, x, y) is the element midpoint
inline std::string form_csv(const OneForm3& A) {
    Csv c({"component", "m", "i", "j", "x1", "x", "y", "re", "im"});
    const Grid3& G = A.grid;
    const Grid2& g = G.chart;
    const double hh = 0.5 * g.h;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (int m = 0; m + 1 < G.n1; ++m) {
                const Vec2 p = g.node_pos(i, j);
                const cplx z = A.a1[G.e1(m, g.node(i, j))];
                c.row("a1", m, i, j, G.x1_mid(m), p.x, p.y, z.real(), z.imag());
            }
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m) {
                const Vec2 p = g.node_pos(i, j);
                const cplx z = A.a2[G.e2(m, g.xedge(i, j))];
                c.row("a2", m, i, j, G.x1(m), p.x + hh, p.y, z.real(), z.imag());
            }
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m) {
                const Vec2 p = g.node_pos(i, j);
                const cplx z = A.a3[G.e3(m, g.yedge(i, j))];
                c.row("a3", m, i, j, G.x1(m), p.x, p.y + hh, z.real(), z.imag());
            }
    return c.str();
}

inline std::string form_csv(const TwoForm3& F) {
    Csv c({"component", "m", "i", "j", "x1", "x", "y", "re", "im"});
    const Grid3& G = F.grid;
    const Grid2& g = G.chart;
    const double hh = 0.5 * g.h;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i)
            for (int m = 0; m + 1 < G.n1; ++m) {
                const Vec2 p = g.node_pos(i, j);
                const cplx z = F.f12[G.f12(m, g.xedge(i, j))];
                c.row("f12", m, i, j, G.x1_mid(m), p.x + hh, p.y, z.real(), z.imag());
            }
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            for (int m = 0; m + 1 < G.n1; ++m) {
                const Vec2 p = g.node_pos(i, j);
                const cplx z = F.f13[G.f13(m, g.yedge(i, j))];
                c.row("f13", m, i, j, G.x1_mid(m), p.x, p.y + hh, z.real(), z.imag());
            }
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i)
            for (int m = 0; m < G.n1; ++m) {
                const Vec2 p = g.node_pos(i, j);
                const cplx z = F.f23[G.f23(m, g.cell(i, j))];
                c.row("f23", m, i, j, G.x1(m), p.x + hh, p.y + hh, z.real(), z.imag());
            }
    return c.str();
}

inline std::string amplitude_csv(const AmplitudeField& f) {
    Csv c({"i", "k", "x", "t", "re", "im"});
    const RectGrid& r = f.grid;
    for (int k = 0; k < r.nt; ++k)
        for (int i = 0; i < r.nx; ++i) c.row(i, k, r.x(i), r.t(k), f.at(i, k).real(), f.at(i, k).imag());
    return c.str();
}

inline std::string cauchy_csv(const CauchyData& d, const Grid3& G) {
    Csv c({"node", "x1", "x", "y", "dirichlet_re", "dirichlet_im", "neumann_re", "neumann_im"});
    for (std::size_t k = 0; k < d.nodes.size(); ++k) {
        const std::size_t n = d.nodes[k];
        const int m = int(n % std::size_t(G.n1));
        const std::size_t kc = n / std::size_t(G.n1);
        const Vec2 p = G.chart.node_pos(int(kc % std::size_t(G.chart.nx)), int(kc / std::size_t(G.chart.nx)));
        c.row(n, G.x1(m), p.x, p.y, d.dirichlet[k].real(), d.dirichlet[k].imag(), d.magnetic_neumann[k].real(),
              d.magnetic_neumann[k].imag());
    }
    return c.str();
}

// ------------------------------------------------------------ rasters

/// Gray image of nonnegative values, row 0 at the top.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<double> values;  // row-major
    std::string quantity;
    std::string rows;     // meaning of the vertical axis
    std::string columns;  // meaning of the horizontal axis
};

struct EncodedRaster {
    std::string pgm;
    std::string sidecar;
};

/// Binary PGM (P5) with a linear map [value_min, value_max] -> [0, maxval]
/// and a text sidecar holding the map. 16-bit samples are big-endian.
inline EncodedRaster encode_pgm(const Raster& r, int bits = 16) {
    if (bits != 8 && bits != 16) throw std::invalid_argument("encode_pgm: bits must be 8 or 16");
    if (r.width < 1 || r.height < 1 || r.values.size() != std::size_t(r.width) * r.height)
        throw std::invalid_argument("encode_pgm: raster shape does not match its values");
    const int maxval = bits == 8 ? 255 : 65535;
    double lo = r.values.front(), hi = lo;
    for (double v : r.values) {
        if (!std::isfinite(v)) throw NumericError("encode_pgm: non-finite value in " + r.quantity);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    EncodedRaster out;
    out.pgm = "P5\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n" + std::to_string(maxval) + "\n";
    for (double v : r.values) {
        const long q = hi > lo ? std::lround((v - lo) / (hi - lo) * maxval) : 0;
        if (bits == 16) out.pgm += char((q >> 8) & 0xff);
        out.pgm += char(q & 0xff);
    }
    std::ostringstream s;
    s << "format = P5\n"
      << "width = " << r.width << "\n"
      << "height = " << r.height << "\n"
      << "maxval = " << maxval << "\n"
      << "value_min = " << num(lo) << "\n"
      << "value_max = " << num(hi) << "\n"
      << "mapping = value_min + sample / maxval * (value_max - value_min)\n"
      << "quantity = " << r.quantity << "\n"
      << "rows = " << r.rows << "\n"
      << "columns = " << r.columns << "\n";
    out.sidecar = s.str();
    return out;
}

//! |D(lambda, ray)| with one row per lambda, lambda increasing downwards
inline Raster sinogram_raster(const Sinogram& D) {
    Raster r;
    r.width = int(D.n_rays());
    r.height = int(D.n_lambda());
    for (const auto& row : D.values)
        for (const cplx& z : row) r.values.push_back(std::abs(z));
    r.quantity = "|D(lambda, ray)|";
    r.rows = "lambda index, increasing downwards";
    r.columns = "ray_id";
    return r;
}

//! |f| on a 2-D node field, top row at the largest y
inline Raster magnitude_raster(const ScalarField0& f, const std::string& quantity) {
    Raster r;
    const Grid2& g = f.grid;
    r.width = g.nx;
    r.height = g.ny;
    for (int j = g.ny - 1; j >= 0; --j)
        for (int i = 0; i < g.nx; ++i) r.values.push_back(std::abs(f.v[g.node(i, j)]));
    r.quantity = quantity;
    r.rows = "node j, largest y at the top";
    r.columns = "node i, increasing x";
    return r;
}

//! |f| on the x1 node layer m of a product-grid node field
inline Raster magnitude_raster(const ScalarField3& f, int m, const std::string& quantity) {
    ScalarField0 s = ScalarField0::zeros(f.grid.chart);
    for (std::size_t k = 0; k < s.v.size(); ++k) s.v[k] = f.v[f.grid.node(m, k)];
    return magnitude_raster(s, quantity);
}

//! |f23| on the x1 node layer m, one pixel per cell
inline Raster f23_raster(const TwoForm3& F, int m, const std::string& quantity) {
    Raster r;
    const Grid2& g = F.grid.chart;
    r.width = g.nx - 1;
    r.height = g.ny - 1;
    for (int j = g.ny - 2; j >= 0; --j)
        for (int i = 0; i + 1 < g.nx; ++i) r.values.push_back(std::abs(F.f23[F.grid.f23(m, g.cell(i, j))]));
    r.quantity = quantity;
    r.rows = "cell j, largest y at the top";
    r.columns = "cell i, increasing x";
    return r;
}

inline Raster amplitude_raster(const AmplitudeField& f, const std::string& quantity) {
    Raster r;
    r.width = f.grid.nx;
    r.height = f.grid.nt;
    for (int k = 0; k < f.grid.nt; ++k)
        for (int i = 0; i < f.grid.nx; ++i) r.values.push_back(std::abs(f.at(i, k)));
    r.quantity = quantity;
    r.rows = "t index, increasing downwards";
    r.columns = "x1 index, increasing";
    return r;
}

// ------------------------------------------------------------ artifacts

/// Files written below one output directory, with their hashes.
///
/// The manifest lists every other file as "<sha256>  <relative path>" sorted
/// by path, the layout sha256sum -c accepts.
class ArtifactSet {
public:
    explicit ArtifactSet(std::filesystem::path root) : root_(std::move(root)) {
        std::error_code ec;
        std::filesystem::create_directories(root_, ec);
        if (ec) throw IoError("cannot create output directory " + root_.string() + ": " + ec.message());
    }

    const std::filesystem::path& root() const { return root_; }

    void write(const std::string& rel, const std::string& bytes) {
        const auto p = root_ / rel;
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + p.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out) throw IoError("short write to " + p.string());
        hashes_[rel] = sha256_hex(bytes);
    }

    void write_raster(const std::string& stem, const Raster& r, int bits = 16) {
        const auto e = encode_pgm(r, bits);
        write(stem + ".pgm", e.pgm);
        write(stem + ".pgm.txt", e.sidecar);
    }

    const std::map<std::string, std::string>& hashes() const { return hashes_; }

    std::string manifest_text() const {
        std::string s;
        for (const auto& [rel, h] : hashes_) s += h + "  " + rel + "\n";
        return s;
    }

    void write_manifest(const std::string& name = "manifest.txt") {
        const std::string text = manifest_text();
        const auto p = root_ / name;
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + p.string());
        out << text;
    }

private:
    std::filesystem::path root_;
    std::map<std::string, std::string> hashes_;
};

struct ManifestCheck {
    std::size_t files = 0;
    std::vector<std::string> mismatched;
    std::vector<std::string> missing;
    bool ok() const { return mismatched.empty() && missing.empty(); }
};

//! recompute every hash listed in a manifest
inline ManifestCheck verify_manifest(const std::filesystem::path& dir, const std::string& name = "manifest.txt") {
    std::istringstream in(read_file(dir / name));
    ManifestCheck out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto sep = line.find("  ");
        if (sep == std::string::npos) throw IoError("malformed manifest line: " + line);
        const std::string h = line.substr(0, sep), rel = line.substr(sep + 2);
        ++out.files;
        if (!std::filesystem::exists(dir / rel)) {
            out.missing.push_back(rel);
            continue;
        }
        if (sha256_hex(read_file(dir / rel)) != h) out.mismatched.push_back(rel);
    }
    return out;
}

}  // namespace io
}  // namespace cta
