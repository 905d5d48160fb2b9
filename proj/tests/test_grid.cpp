#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "thermosmolu/grid.hpp"
#include "thermosmolu/snapshot_io.hpp"

using namespace thermosmolu;
using std::numbers::pi;

TEST(Grid, SpacingAndIndexing) {
    const Grid g = Grid::box({2.0, 1.0}, {5, 3});
    EXPECT_EQ(g.dim(), 2);
    EXPECT_EQ(g.points(), 15u);
    EXPECT_DOUBLE_EQ(g.spacing(0), 0.5);
    EXPECT_DOUBLE_EQ(g.spacing(1), 0.5);
    EXPECT_EQ(g.stride(0), 3u);
    EXPECT_EQ(g.stride(1), 1u);
    for (std::size_t p = 0; p < g.points(); ++p) EXPECT_EQ(g.flat(g.indices(p)), p);
    const auto x = g.position(g.flat({4, 2, 0}));
    EXPECT_DOUBLE_EQ(x[0], 2.0);
    EXPECT_DOUBLE_EQ(x[1], 1.0);
}

TEST(Grid, RejectsDegenerateInput) {
    EXPECT_THROW(Grid::line(1.0, 2), Error);
    EXPECT_THROW(Grid::line(0.0, 10), Error);
    EXPECT_THROW(Grid::line(-1.0, 10), Error);
    try {
        Grid::line(1.0, 2);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SchemaError);
    }
}

TEST(Grid, QuadratureWeightsSumToVolume) {
    const Grid g = Grid::box({2.0, 3.0, 0.5}, {7, 4, 5});
    double s = 0.0;
    for (double w : g.quadrature_weights()) s += w;
    EXPECT_NEAR(s, 3.0, 1e-14);
}

TEST(Grid, ReflectIndexIsEvenAboutBothFaces) {
    const std::size_t n = 6;
    for (long long i = 0; i < 6; ++i) EXPECT_EQ(reflect_index(i, n), static_cast<std::size_t>(i));
    EXPECT_EQ(reflect_index(-1, n), 1u);
    EXPECT_EQ(reflect_index(-3, n), 3u);
    EXPECT_EQ(reflect_index(6, n), 4u);
    EXPECT_EQ(reflect_index(9, n), 1u);
    EXPECT_EQ(reflect_index(10, n), 0u);
    EXPECT_EQ(reflect_index(11, n), 1u);
}

TEST(ScalarField, SizeAndGridMismatch) {
    const Grid g = Grid::line(1.0, 5);
    EXPECT_THROW(ScalarField(g, std::vector<double>(4, 0.0)), Error);
    ScalarField a(g, 1.0);
    ScalarField b(Grid::line(1.0, 6), 1.0);
    try {
        a += b;
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::GridMismatch);
    }
}

TEST(Operators, GradientIsExactForLinearInteriorAndZeroNormalOnFaces) {
    const Grid g = Grid::box({1.0, 2.0}, {11, 9});
    const ScalarField f = ScalarField::from_function(g, [](const std::array<double, 3>& x) { return 3.0 * x[0] - x[1]; });
    const VectorField grad = gradient(f);
    for (std::size_t p = 0; p < g.points(); ++p) {
        const auto i = g.indices(p);
        const bool face0 = i[0] == 0 || i[0] + 1 == g.cells(0);
        const bool face1 = i[1] == 0 || i[1] + 1 == g.cells(1);
        EXPECT_NEAR(grad[0][p], face0 ? 0.0 : 3.0, 1e-12);
        EXPECT_NEAR(grad[1][p], face1 ? 0.0 : -1.0, 1e-12);
    }
}

TEST(Operators, NeumannLaplacianOfCosineModeMatchesDiscreteEigenvalue) {
    // With even reflection the discrete cosine modes are exact eigenvectors.
    const std::size_t n = 33;
    const Grid g = Grid::line(1.0, n);
    const double h = g.spacing(0);
    const ScalarField f = ScalarField::from_function(g, [](const std::array<double, 3>& x) { return std::cos(2 * pi * x[0]); });
    const ScalarField lap = laplacian_neumann(f);
    const double lambda = -4.0 / (h * h) * std::pow(std::sin(2 * pi * h / 2), 2);
    for (std::size_t p = 0; p < n; ++p) EXPECT_NEAR(lap[p], lambda * f[p], 1e-9);
}

TEST(Operators, LaplacianSumsToZeroUnderQuadrature) {
    const Grid g = Grid::box({1.0, 1.0}, {9, 12});
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-1, 1);
    ScalarField f(g);
    for (double& v : f.values()) v = d(rng);
    EXPECT_NEAR(integrate(laplacian_neumann(f)), 0.0, 1e-11);
}

TEST(Norms, ConstantFieldNorms) {
    const Grid g = Grid::box({2.0, 0.5}, {5, 5});
    const ScalarField f(g, -3.0);
    const NormReport n = norms(f);
    EXPECT_DOUBLE_EQ(n.linf, 3.0);
    EXPECT_NEAR(n.l2, 3.0, 1e-14);
    EXPECT_NEAR(n.l4, 3.0 * std::pow(1.0, 0.25), 1e-14);
    EXPECT_DOUBLE_EQ(n.h1_semi, 0.0);
    EXPECT_NEAR(integrate(f), -3.0, 1e-14);
}

TEST(Norms, TrapezoidL2OfCosineIsExact) {
    // Trapezoid is exact for trigonometric polynomials of degree < n - 1 on [0, L].
    const Grid g = Grid::line(1.0, 21);
    const ScalarField f = ScalarField::from_function(g, [](const std::array<double, 3>& x) { return std::cos(pi * x[0]); });
    EXPECT_NEAR(lp_norm(f, 2.0), std::sqrt(0.5), 1e-14);
}

class SnapshotIo : public ::testing::Test {
protected:
    std::filesystem::path dir = std::filesystem::temp_directory_path() / "thermosmolu_test_grid_io";
    void SetUp() override { std::filesystem::create_directories(dir); }
    void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(SnapshotIo, CsvAndRawRoundTripBitwise) {
    const Grid g = Grid::box({1.0, 0.75}, {5, 4});
    std::mt19937_64 rng(11);
    std::normal_distribution<double> d;
    ScalarField f(g);
    for (double& v : f.values()) v = d(rng) * 1e-7 + d(rng);
    write_field_csv(f, dir / "f.csv");
    write_field_raw(f, dir / "f.f64");
    for (const ScalarField& back : {read_field_csv(dir / "f.csv"), read_field_raw(dir / "f.f64")}) {
        EXPECT_TRUE(back.grid() == g);
        for (std::size_t p = 0; p < g.points(); ++p) EXPECT_EQ(back[p], f[p]);
    }
}

TEST_F(SnapshotIo, HeaderFormat) {
    const Grid g = Grid::box({1.0, 2.0}, {3, 5});
    EXPECT_EQ(grid_header(g), "# grid: 2,3,5,0.5,0.5");
    write_field_csv(ScalarField(g, 1.0), dir / "h.csv");
    std::ifstream in(dir / "h.csv");
    std::string first;
    std::getline(in, first);
    EXPECT_EQ(first, "# grid: 2,3,5,0.5,0.5");
}

TEST_F(SnapshotIo, TruncatedFilesAreIoErrors) {
    const Grid g = Grid::line(1.0, 5);
    write_field_csv(ScalarField(g, 1.0), dir / "t.csv");
    {
        std::ofstream out(dir / "t.csv", std::ios::app);
        out << "7\n";
    }
    try {
        read_field_csv(dir / "t.csv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::IoError);
    }
    EXPECT_THROW(read_field_raw(dir / "missing.f64"), Error);
}

TEST(Format, ShortestRoundTrip) {
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(1.0), "1");
    const double v = 0.1 + 0.2;
    EXPECT_EQ(parse_double(format_double(v)), v);
    EXPECT_THROW(parse_double("1.0x"), Error);
}
