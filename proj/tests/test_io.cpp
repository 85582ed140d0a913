#include <gtest/gtest.h>

#include "cta/io.hpp"

using namespace cta;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("cta_io_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Sha256, KnownVectors) {
    EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(io::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Numbers, RoundTripExactly) {
    for (double x : {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0, -0.0}) EXPECT_EQ(std::stod(io::num(x)), x);
    EXPECT_EQ(io::num(0.5), "0.5");
    EXPECT_EQ(io::num(-2.0), "-2");
}

TEST(Csv, HeaderAndRows) {
    io::Csv c({"a", "b", "c"});
    c.row(1, 0.25, "x");
    c.row(std::size_t(7), -1.5, std::string("y"));
    EXPECT_EQ(c.str(), "a,b,c\n1,0.25,x\n7,-1.5,y\n");
    EXPECT_THROW(c.row(1, 2), std::logic_error);
}

TEST(Csv, SinogramLayout) {
    Sinogram D;
    D.lambda_grid = {-1.0, 1.0};
    D.values = {{cplx(1, 2), cplx(3, 4)}, {cplx(5, -6), cplx(0, 0)}};
    EXPECT_EQ(io::sinogram_csv(D), "lambda,ray_id,re,im\n-1,0,1,2\n-1,1,3,4\n1,0,5,-6\n1,1,0,0\n");
}

TEST(Csv, ScalarFieldRowsRunWithIFastest) {
    Grid2 g = Grid2::square(3, -1.0, 1.0);
    auto f = ScalarField0::zeros(g);
    f.v[g.node(2, 1)] = cplx(0.5, -0.25);
    const std::string s = io::field_csv(f);
    std::istringstream in(s);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "i,j,x,y,re,im");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        if (rows == 6) {
            EXPECT_EQ(line, "2,1,1,0,0.5,-0.25");
        }
    }
    EXPECT_EQ(rows, 9);
}

TEST(Csv, FormRowCountsMatchElementCounts) {
    const Grid3 G = Grid3::make(4, 1.0, Grid2::square(3, -1.0, 1.0));
    auto count = [](const std::string& s, const std::string& tag) {
        std::size_t n = 0, pos = 0;
        while ((pos = s.find("\n" + tag + ",", pos)) != std::string::npos) ++n, ++pos;
        return n;
    };
    const std::string a = io::form_csv(OneForm3::zeros(G));
    EXPECT_EQ(count(a, "a1"), G.n_e1());
    EXPECT_EQ(count(a, "a2"), G.n_e2());
    EXPECT_EQ(count(a, "a3"), G.n_e3());
    const std::string f = io::form_csv(TwoForm3::zeros(G));
    EXPECT_EQ(count(f, "f12"), G.n_f12());
    EXPECT_EQ(count(f, "f13"), G.n_f13());
    EXPECT_EQ(count(f, "f23"), G.n_f23());
}

TEST(Pgm, SixteenBitLayout) {
    io::Raster r{3, 2, {0.0, 1.0, 2.0, 3.0, 4.0, 5.0}, "test", "rows", "cols"};
    const auto e = io::encode_pgm(r, 16);
    const std::string header = "P5\n3 2\n65535\n";
    ASSERT_EQ(e.pgm.size(), header.size() + 12);
    EXPECT_EQ(e.pgm.substr(0, header.size()), header);
    auto sample = [&](int k) {
        const auto hi = static_cast<unsigned char>(e.pgm[header.size() + 2 * std::size_t(k)]);
        const auto lo = static_cast<unsigned char>(e.pgm[header.size() + 2 * std::size_t(k) + 1]);
        return (unsigned(hi) << 8) | lo;
    };
    EXPECT_EQ(sample(0), 0u);
    EXPECT_EQ(sample(1), 13107u);  // 65535 / 5, rounded
    EXPECT_EQ(sample(5), 65535u);
    EXPECT_NE(e.sidecar.find("value_min = 0\n"), std::string::npos);
    EXPECT_NE(e.sidecar.find("value_max = 5\n"), std::string::npos);
    EXPECT_NE(e.sidecar.find("maxval = 65535\n"), std::string::npos);
}

TEST(Pgm, EightBitAndConstantImage) {
    io::Raster r{2, 2, {7.0, 7.0, 7.0, 7.0}, "const", "rows", "cols"};
    const auto e = io::encode_pgm(r, 8);
    EXPECT_EQ(e.pgm, std::string("P5\n2 2\n255\n") + std::string(4, '\0'));
    EXPECT_THROW(io::encode_pgm(r, 12), std::invalid_argument);
    r.values[2] = std::nan("");
    EXPECT_THROW(io::encode_pgm(r, 8), NumericError);
    r.values.pop_back();
    EXPECT_THROW(io::encode_pgm(r, 8), std::invalid_argument);
}

TEST(Pgm, TopRowIsLargestY) {
    Grid2 g = Grid2::square(3, 0.0, 2.0);
    auto f = ScalarField0::zeros(g);
    f.v[g.node(0, 2)] = 1.0;  // top-left corner in the image
    const auto r = io::magnitude_raster(f, "f");
    EXPECT_EQ(r.values[0], 1.0);
    EXPECT_EQ(r.values[8], 0.0);
}

TEST(Artifacts, ManifestListsEveryFileSortedAndVerifies) {
    const auto dir = scratch("manifest");
    io::ArtifactSet out(dir);
    out.write("b.csv", "x\n1\n");
    out.write("a.txt", "hello");
    out.write_raster("img", {1, 1, {0.0}, "q", "r", "c"});
    out.write_manifest();
    const std::string m = io::read_file(dir / "manifest.txt");
    EXPECT_EQ(m, io::sha256_hex("hello") + "  a.txt\n" + io::sha256_hex("x\n1\n") + "  b.csv\n" +
                     io::sha256_hex(io::read_file(dir / "img.pgm")) + "  img.pgm\n" +
                     io::sha256_hex(io::read_file(dir / "img.pgm.txt")) + "  img.pgm.txt\n");
    auto chk = io::verify_manifest(dir);
    EXPECT_TRUE(chk.ok());
    EXPECT_EQ(chk.files, 4u);

    // every file in the directory other than the manifest is listed
    std::size_t on_disk = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().filename() != "manifest.txt") ++on_disk;
    EXPECT_EQ(on_disk, chk.files);

    {
        std::ofstream f(dir / "a.txt", std::ios::binary | std::ios::trunc);
        f << "tampered";
    }
    std::filesystem::remove(dir / "b.csv");
    chk = io::verify_manifest(dir);
    EXPECT_FALSE(chk.ok());
    EXPECT_EQ(chk.mismatched, std::vector<std::string>{"a.txt"});
    EXPECT_EQ(chk.missing, std::vector<std::string>{"b.csv"});
    std::filesystem::remove_all(dir);
}

TEST(Artifacts, UnwritableDirectoryIsIoError) {
    const auto dir = scratch("blocked");
    { std::ofstream f(dir); f << "file, not a directory"; }
    EXPECT_THROW(io::ArtifactSet{dir / "sub"}, IoError);
    std::filesystem::remove(dir);
}
