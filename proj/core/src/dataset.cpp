#include "paglab/dataset.hpp"

#include "paglab/binio.hpp"
#include "paglab/rng.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace paglab {

namespace {

constexpr std::size_t kImageDim = 3072;
constexpr std::size_t kImageClasses = 10;
constexpr std::size_t kImageRecordBytes = 1 + kImageDim;

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t line, const std::string& what) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

} // namespace

Tensor Dataset::sample_tensor(std::size_t i) const {
    auto s = sample(i);
    return Tensor({dim}, std::vector<double>(s.begin(), s.end()));
}

std::vector<std::vector<std::size_t>> Dataset::indices_by_class() const {
    std::vector<std::vector<std::size_t>> by_class(class_count);
    for (std::size_t i = 0; i < size(); ++i) by_class[y[i]].push_back(i);
    return by_class;
}

std::uint64_t Dataset::content_hash() const {
    std::uint64_t h = fnv1a(std::span<const double>(x));
    for (std::size_t label : y) {
        std::uint64_t v = label;
        h = fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(&v), sizeof v), h);
    }
    return h;
}

void Dataset::validate() const {
    if (size() == 0) throw std::invalid_argument("dataset: empty");
    if (x.size() != size() * dim) throw std::invalid_argument("dataset: sample matrix size mismatch");
    for (std::size_t i = 0; i < size(); ++i) {
        if (y[i] >= class_count) {
            throw std::invalid_argument("dataset: label " + std::to_string(y[i]) + " at row " + std::to_string(i) +
                                        " out of range for " + std::to_string(class_count) + " classes");
        }
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite sample value");
    }
}

ToySplits toy_generate(std::uint64_t seed, std::size_t train_per_mode, std::size_t test_per_mode) {
    if (train_per_mode < 1 || test_per_mode < 1) throw std::invalid_argument("toy_generate: per-mode count must be >= 1");
    static constexpr std::array<std::array<double, 3>, 2> kModeCenters = {{{-50.0, -10.0, 30.0},
                                                                           {-30.0, 10.0, 50.0}}};
    auto make_split = [&](std::uint64_t stream, std::size_t per_mode, const char* tag) {
        std::mt19937_64 rng(mix_seed(seed, stream));
        Dataset d;
        d.dim = 2;
        d.class_count = 2;
        d.split_tag = tag;
        d.provenance = "toy(seed=" + std::to_string(seed) + ")";
        for (std::size_t cls = 0; cls < 2; ++cls) {
            for (double center : kModeCenters[cls]) {
                for (std::size_t i = 0; i < per_mode; ++i) {
                    const double x1 = center + normal01(rng);
                    d.x.push_back(x1);
                    d.x.push_back(2.0 * x1);
                    d.y.push_back(cls);
                }
            }
        }
        return d;
    };
    ToySplits splits;
    splits.train = make_split(0, train_per_mode, "train");
    splits.test = make_split(1, test_per_mode, "test");
    return splits;
}

Dataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> expected_classes) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("csv: cannot open " + path.string());

    Dataset d;
    d.split_tag = "file";
    d.provenance = path.string();
    std::string line;
    std::size_t line_no = 0;
    std::size_t max_label = 0;
    bool saw_row = false;

    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < 2) line_error(path, line_no, "need at least one feature and a label");

        std::vector<double> values;
        values.reserve(fields.size());
        bool numeric = true;
        for (const std::string& f : fields) {
            try {
                std::size_t used = 0;
                double v = std::stod(f, &used);
                while (used < f.size() && std::isspace(static_cast<unsigned char>(f[used]))) ++used;
                if (used != f.size()) {
                    numeric = false;
                    break;
                }
                values.push_back(v);
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (!saw_row && line_no == 1) continue; // header line
            line_error(path, line_no, "non-numeric field");
        }

        const std::size_t row_dim = values.size() - 1;
        if (!saw_row) {
            d.dim = row_dim;
            saw_row = true;
        } else if (row_dim != d.dim) {
            line_error(path, line_no,
                       "ragged row: " + std::to_string(row_dim) + " features, expected " + std::to_string(d.dim));
        }

        for (std::size_t i = 0; i < row_dim; ++i) {
            if (!std::isfinite(values[i])) line_error(path, line_no, "non-finite feature value");
            d.x.push_back(values[i]);
        }
        const double label_value = values.back();
        if (!std::isfinite(label_value) || label_value < 0.0 || label_value != std::floor(label_value)) {
            line_error(path, line_no, "label must be a nonnegative integer");
        }
        const std::size_t label = static_cast<std::size_t>(label_value);
        if (expected_classes && label >= *expected_classes) {
            line_error(path, line_no,
                       "label " + std::to_string(label) + " out of range for " + std::to_string(*expected_classes) +
                           " classes");
        }
        max_label = std::max(max_label, label);
        d.y.push_back(label);
    }
    if (!saw_row) throw std::runtime_error("csv: " + path.string() + " contains no data rows");
    d.class_count = expected_classes ? *expected_classes : max_label + 1;
    d.validate();
    return d;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("csv: cannot open " + path.string() + " for writing");
    char buf[32];
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto row = data.sample(i);
        for (double v : row) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << buf << ',';
        }
        os << data.y[i] << '\n';
    }
    if (!os) throw std::runtime_error("csv: write failed for " + path.string());
}

Dataset load_image_batches(const std::filesystem::path& path, std::optional<std::size_t> limit) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("images: cannot open " + path.string());

    Dataset d;
    d.dim = kImageDim;
    d.class_count = kImageClasses;
    d.split_tag = "file";
    d.provenance = path.string();

    std::array<unsigned char, kImageRecordBytes> record;
    std::size_t count = 0;
    while (!(limit && count >= *limit)) {
        is.read(reinterpret_cast<char*>(record.data()), record.size());
        if (is.gcount() == 0 && is.eof()) break;
        if (static_cast<std::size_t>(is.gcount()) != record.size()) {
            throw std::runtime_error("images: truncated record " + std::to_string(count) + " in " + path.string());
        }
        if (record[0] >= kImageClasses) {
            throw std::runtime_error("images: label " + std::to_string(record[0]) + " out of range in record " +
                                     std::to_string(count));
        }
        d.y.push_back(record[0]);
        for (std::size_t i = 1; i < record.size(); ++i) d.x.push_back(record[i] / 255.0);
        ++count;
    }
    if (count == 0) throw std::runtime_error("images: " + path.string() + " contains no records");
    d.validate();
    return d;
}

} // namespace paglab
