#include "paglab/dataset.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace paglab;

namespace {

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p);
    os << text;
}

} // namespace

TEST_CASE("toy: every point lies on x2 = 2*x1, sizes 6000/600") {
    ToySplits splits = toy_generate(0);
    CHECK(splits.train.size() == 6000);
    CHECK(splits.test.size() == 600);
    CHECK(splits.train.dim == 2);
    CHECK(splits.train.class_count == 2);
    for (const Dataset* d : {&splits.train, &splits.test}) {
        for (std::size_t i = 0; i < d->size(); ++i) {
            auto s = d->sample(i);
            CHECK(s[1] == 2.0 * s[0]);
        }
    }
    std::size_t class0 = 0;
    for (std::size_t label : splits.train.y) class0 += label == 0;
    CHECK(class0 == 3000);
}

TEST_CASE("toy: per-mode means of x1 sit near the configured centers") {
    ToySplits splits = toy_generate(123);
    // samples are generated mode-by-mode: 1000 per mode, class 0 then class 1
    const double centers[6] = {-50.0, -10.0, 30.0, -30.0, 10.0, 50.0};
    for (std::size_t mode = 0; mode < 6; ++mode) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 1000; ++i) mean += splits.train.sample(mode * 1000 + i)[0];
        mean /= 1000.0;
        CHECK(std::abs(mean - centers[mode]) < 0.15); // 4+ sigma of the standard error
    }
}

TEST_CASE("toy: deterministic per seed, train and test streams disjoint") {
    ToySplits a = toy_generate(7);
    ToySplits b = toy_generate(7);
    CHECK(a.train.x == b.train.x);
    CHECK(a.test.x == b.test.x);
    CHECK(a.train.x[0] != a.test.x[0]);
    ToySplits c = toy_generate(8);
    CHECK(a.train.x[0] != c.train.x[0]);
}

TEST_CASE("csv: round trip through save_csv") {
    auto path = temp_file("paglab_test_data.csv");
    Dataset d;
    d.dim = 2;
    d.class_count = 2;
    d.x = {1.5, -2.25, 0.125, 3.75, -0.5, 0.0009765625};
    d.y = {0, 1, 1};
    save_csv(d, path);
    Dataset back = load_csv(path);
    CHECK(back.size() == 3);
    CHECK(back.dim == 2);
    CHECK(back.x == d.x);
    CHECK(back.y == d.y);
    std::filesystem::remove(path);
}

TEST_CASE("csv: header detection, label range, malformed rows") {
    auto path = temp_file("paglab_test_hdr.csv");
    write_text(path, "x1,x2,label\n1.0,2.0,0\n3.0,4.0,1\n");
    Dataset d = load_csv(path);
    CHECK(d.size() == 2);
    CHECK(d.class_count == 2);

    // label equal to the declared class count is out of range
    write_text(path, "1.0,2.0,0\n3.0,4.0,2\n");
    CHECK_THROWS_WITH_AS(load_csv(path, 2), doctest::Contains(":2:"), std::runtime_error);

    write_text(path, "");
    CHECK_THROWS_AS(load_csv(path), std::runtime_error);

    write_text(path, "1.0,2.0,0\n1.0,0\n");
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("ragged"), std::runtime_error);

    write_text(path, "1.0,2.0,0\n1.0,abc,1\n");
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains(":2:"), std::runtime_error);

    write_text(path, "1.0,nan,0\n");
    CHECK_THROWS_AS(load_csv(path), std::runtime_error);

    write_text(path, "1.0,2.0,-1\n");
    CHECK_THROWS_AS(load_csv(path), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("image batches: scaling, limit, truncation") {
    auto path = temp_file("paglab_test_images.bin");
    {
        std::ofstream os(path, std::ios::binary);
        std::vector<unsigned char> record(3073, 0);
        record[0] = 3; // label
        os.write(reinterpret_cast<const char*>(record.data()), record.size());
        record[0] = 9;
        for (std::size_t i = 1; i < record.size(); ++i) record[i] = 255;
        os.write(reinterpret_cast<const char*>(record.data()), record.size());
        record[0] = 1;
        record[1] = 128;
        os.write(reinterpret_cast<const char*>(record.data()), record.size());
    }
    Dataset d = load_image_batches(path);
    REQUIRE(d.size() == 3);
    CHECK(d.dim == 3072);
    CHECK(d.class_count == 10);
    CHECK(d.y[0] == 3);
    for (std::size_t i = 0; i < 3072; ++i) CHECK(d.sample(0)[i] == 0.0);
    CHECK(d.sample(1)[0] == 1.0); // byte 255 maps to exactly 1.0
    for (double v : d.x) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    Dataset limited = load_image_batches(path, 2);
    CHECK(limited.size() == 2);

    std::filesystem::resize_file(path, 3073 + 100);
    CHECK_THROWS_WITH_AS(load_image_batches(path), doctest::Contains("truncated"), std::runtime_error);
    std::filesystem::remove(path);
}
