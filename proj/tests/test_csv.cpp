#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ghmc/csv.hpp"
#include "oracles.hpp"

using namespace ghmc;
namespace fs = std::filesystem;

namespace {

class CsvTest : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("ghmc_csv_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string &name) const { return (dir_ / name).string(); }
    std::string write(const std::string &name, const std::string &text) const {
        std::ofstream(path(name)) << text;
        return path(name);
    }

    fs::path dir_;
};

} // namespace

TEST(FormatDouble, RoundTripsExactly) {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double x = u(rng) * std::pow(10.0, static_cast<int>(i % 40) - 20);
        EXPECT_EQ(parse_double(format_double(x), "t"), x);
    }
}

TEST_F(CsvTest, DatasetRoundTripWithMissingAndLabels) {
    std::mt19937_64 rng(62);
    for (int t = 0; t < 10; ++t) {
        const Matrix v = oracle::gaussian(7, 4, rng);
        Mask m(7, 4);
        std::bernoulli_distribution keep(0.7);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng);
        Vector y(7);
        for (Eigen::Index i = 0; i < 7; ++i) y(i) = keep(rng) ? 1.0 : 0.0;
        const MaskedDataMatrix data(v, m, DataKind::Continuous, y);
        write_dataset_csv(path("d.csv"), data, {"a", "b", "c", "d"});
        const Dataset back = read_dataset_csv(path("d.csv"), DataKind::Continuous);
        EXPECT_EQ(back.columns, (std::vector<std::string>{"a", "b", "c", "d"}));
        EXPECT_EQ(back.data.mask, m);
        ASSERT_TRUE(back.data.labels.has_value());
        EXPECT_EQ(*back.data.labels, y);
        for (Eigen::Index i = 0; i < 7; ++i)
            for (Eigen::Index j = 0; j < 4; ++j)
                if (m(i, j)) {
                    EXPECT_EQ(back.data.values(i, j), v(i, j));
                }
    }
}

TEST_F(CsvTest, LabelColumnMayAppearAnywhere) {
    const auto p = write("l.csv", "label,x,y\n1,0.5,\n0,,2\n");
    const Dataset ds = read_dataset_csv(p, DataKind::Continuous);
    EXPECT_EQ(ds.columns, (std::vector<std::string>{"x", "y"}));
    EXPECT_EQ((*ds.data.labels)(0), 1.0);
    EXPECT_FALSE(ds.data.mask(0, 1));
    EXPECT_FALSE(ds.data.mask(1, 0));
    EXPECT_EQ(ds.data.values(1, 1), 2.0);
}

TEST_F(CsvTest, MalformedInputsRaiseCsvError) {
    EXPECT_THROW(read_dataset_csv(path("missing.csv"), DataKind::Continuous), CsvError);
    EXPECT_THROW(read_dataset_csv(write("e.csv", ""), DataKind::Continuous), CsvError);
    EXPECT_THROW(read_dataset_csv(write("h.csv", "a,b\n"), DataKind::Continuous), CsvError);
    EXPECT_THROW(read_dataset_csv(write("f.csv", "a,b\n1,2,3\n"), DataKind::Continuous), CsvError);
    EXPECT_THROW(read_dataset_csv(write("n.csv", "a,b\n1,abc\n"), DataKind::Continuous), CsvError);
    EXPECT_THROW(read_dataset_csv(write("2l.csv", "label,a,label\n1,2,3\n"), DataKind::Continuous), CsvError);
    EXPECT_THROW(read_dataset_csv(write("b.csv", "a,b\n1,2\n"), DataKind::Binary), CsvError);
    EXPECT_THROW(read_dataset_csv(write("c.csv", "a,b\n1,0.5\n"), DataKind::Count), CsvError);
    EXPECT_THROW(read_dataset_csv(write("nl.csv", "a,label\n1,\n"), DataKind::Continuous), CsvError);
    EXPECT_THROW(read_moments_csv(write("m.csv", "a,b\n1,2\n")), CsvError);
    EXPECT_THROW(read_block_csv(write("k.csv", "iteration,U[0]\n0,1\n")), CsvError);
    EXPECT_THROW(read_block_csv(write("k2.csv", "iteration,U[1,0],U[0,0]\n0,1,2\n")), CsvError);
    EXPECT_THROW(read_diagnostics_csv(write("g.csv", "iteration,log_density\n0,1\n")), CsvError);
    EXPECT_THROW(read_dataset_csv(write("q.csv", "a,b\n\"1,2\n"), DataKind::Continuous), CsvError);
}

TEST_F(CsvTest, CrlfAndBlankLinesAreTolerated) {
    const auto p = write("w.csv", "a , b\r\n1, 2\r\n\r\n3,4\r\n");
    const Dataset ds = read_dataset_csv(p, DataKind::Count);
    EXPECT_EQ(ds.columns, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(ds.data.rows(), 2);
    EXPECT_EQ(ds.data.values(1, 1), 4.0);
}

TEST(SplitCsvLine, HandlesQuotedFields) {
    EXPECT_EQ(split_csv_line("a,\"b,c\",\"d\"\"e\""), (std::vector<std::string>{"a", "b,c", "d\"e"}));
    EXPECT_EQ(quote_csv_field("x\"y,z"), "\"x\"\"y,z\"");
    EXPECT_EQ(split_csv_line(quote_csv_field("x\"y,z")), (std::vector<std::string>{"x\"y,z"}));
    EXPECT_EQ(split_csv_line(",,"), (std::vector<std::string>{"", "", ""}));
}

TEST_F(CsvTest, MomentsRoundTrip) {
    std::mt19937_64 rng(63);
    GaussianMoments g{oracle::gaussian(3, 1, rng), oracle::gaussian(3, 3, rng)};
    write_moments_csv(path("m.csv"), g);
    const GaussianMoments back = read_moments_csv(path("m.csv"));
    EXPECT_EQ(back.mean, g.mean);
    EXPECT_EQ(back.covariance, g.covariance);
}

TEST_F(CsvTest, ChainRoundTripIsExact) {
    std::mt19937_64 rng(64);
    Chain chain;
    for (int i = 0; i < 6; ++i) {
        ProductState s;
        s.add("U", Geometry::Stiefel, oracle::random_orthonormal(4, 2, rng));
        s.add("mu", Geometry::Euclidean, oracle::gaussian(4, 1, rng));
        chain.samples.push_back(s);
        const double e = i == 3 ? std::nan("") : oracle::gaussian(1, 1, rng)(0, 0);
        chain.records.push_back({-1.5 * i, e, std::isfinite(e) ? std::min(1.0, std::exp(e)) : 0.0, i % 2 == 0});
    }
    const auto files = write_chain_csv(path("run"), chain);
    ASSERT_EQ(files.size(), 3u);
    const BlockTrace u = read_block_csv(path("run_U.csv"));
    EXPECT_EQ(u.name, "U");
    EXPECT_EQ(u.rows, 4);
    EXPECT_EQ(u.cols, 2);
    ASSERT_EQ(u.values.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(u.iterations[i], static_cast<long>(i));
        EXPECT_EQ(u.values[i], chain.samples[i][0].value);
    }
    const BlockTrace mu = read_block_csv(path("run_mu.csv"));
    EXPECT_EQ(mu.values[5], chain.samples[5][1].value);

    const auto recs = read_diagnostics_csv(path("run_diagnostics.csv"));
    ASSERT_EQ(recs.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(recs[i].log_density, chain.records[i].log_density);
        EXPECT_EQ(recs[i].accepted, chain.records[i].accepted);
        if (i == 3)
            EXPECT_TRUE(std::isnan(recs[i].energy_error));
        else
            EXPECT_EQ(recs[i].energy_error, chain.records[i].energy_error);
    }
}

TEST_F(CsvTest, BlockHeaderIsColumnMajor) {
    EXPECT_EQ(block_header("B", 2, 2), (std::vector<std::string>{"iteration", "B[0,0]", "B[1,0]", "B[0,1]", "B[1,1]"}));
    Matrix m(2, 2);
    m << 1, 2, 3, 4;
    write_block_csv(path("b.csv"), "B", {7}, {m});
    std::ifstream f(path("b.csv"));
    std::string header, row;
    std::getline(f, header);
    std::getline(f, row);
    EXPECT_EQ(header, "iteration,\"B[0,0]\",\"B[1,0]\",\"B[0,1]\",\"B[1,1]\"");
    EXPECT_EQ(row, "7,1,3,2,4");
}

TEST_F(CsvTest, TraceFileHasTwoColumns) {
    write_trace_csv(path("t.csv"), {10, 20}, {0.25, 0.5});
    const CsvTable t = read_csv_table(path("t.csv"));
    EXPECT_EQ(t.header, (std::vector<std::string>{"iteration", "distance"}));
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[1][0], "20");
    EXPECT_EQ(parse_double(t.rows[1][1], "t"), 0.5);
}
