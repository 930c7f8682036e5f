#include "boundary.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace paglab::cli {

namespace {

// background palette, one entry per class
constexpr std::uint8_t kPalette[][3] = {
    {158, 202, 225}, // blue
    {252, 146, 114}, // red
    {161, 217, 155}, // green
    {188, 189, 220}, // purple
    {253, 208, 162}, // orange
    {204, 204, 204}, // gray
    {222, 158, 214}, {255, 237, 160}, {141, 211, 199}, {251, 180, 174},
};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

} // namespace

void GridSpec::validate() const {
    if (!(x1_min < x1_max) || !(x2_min < x2_max)) {
        throw std::invalid_argument("grid: min bounds must be below max bounds");
    }
    if (width < 2 || height < 2) throw std::invalid_argument("grid: need at least 2x2 cells");
}

double GridSpec::cell_x1(std::size_t ix) const {
    return x1_min + (static_cast<double>(ix) + 0.5) * (x1_max - x1_min) / static_cast<double>(width);
}

double GridSpec::cell_x2(std::size_t iy) const {
    return x2_max - (static_cast<double>(iy) + 0.5) * (x2_max - x2_min) / static_cast<double>(height);
}

std::vector<std::uint8_t> evaluate_grid(const MlpModel& model, const GridSpec& grid) {
    grid.validate();
    if (model.input_dim() != 2) {
        throw std::invalid_argument("boundary export requires a 2-D model, got input dim " +
                                    std::to_string(model.input_dim()));
    }
    std::vector<std::uint8_t> preds(grid.width * grid.height);
    Tensor point({2});
    for (std::size_t iy = 0; iy < grid.height; ++iy) {
        point[1] = grid.cell_x2(iy);
        for (std::size_t ix = 0; ix < grid.width; ++ix) {
            point[0] = grid.cell_x1(ix);
            preds[iy * grid.width + ix] = static_cast<std::uint8_t>(model.predict(point));
        }
    }
    return preds;
}

void write_ppm(const std::vector<std::uint8_t>& preds, const GridSpec& grid,
               const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write raster to " + path.string());
    os << "P6\n" << grid.width << " " << grid.height << "\n255\n";
    std::vector<unsigned char> row(grid.width * 3);
    for (std::size_t iy = 0; iy < grid.height; ++iy) {
        for (std::size_t ix = 0; ix < grid.width; ++ix) {
            const std::uint8_t c = preds[iy * grid.width + ix] % kPaletteSize;
            row[ix * 3 + 0] = kPalette[c][0];
            row[ix * 3 + 1] = kPalette[c][1];
            row[ix * 3 + 2] = kPalette[c][2];
        }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

void write_grid_csv(const std::vector<std::uint8_t>& preds, const GridSpec& grid,
                    const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write grid csv to " + path.string());
    os << "x1,x2,pred\n";
    char buf[64];
    for (std::size_t iy = 0; iy < grid.height; ++iy) {
        for (std::size_t ix = 0; ix < grid.width; ++ix) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%u\n", grid.cell_x1(ix), grid.cell_x2(iy),
                          static_cast<unsigned>(preds[iy * grid.width + ix]));
            os << buf;
        }
    }
}

void write_points_csv(const MlpModel& model, const Dataset& points, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write points csv to " + path.string());
    os << "x1,x2,label,pred\n";
    char buf[80];
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto s = points.sample(i);
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu,%zu\n", s[0], s[1], points.y[i],
                      model.predict(points.sample_tensor(i)));
        os << buf;
    }
}

MarginStats margin_statistics(const MlpModel& model, const Dataset& points,
                              const std::vector<std::uint8_t>& preds, const GridSpec& grid) {
    // cell centers grouped by predicted class, so each point only scans
    // cells of other classes
    std::vector<std::vector<std::pair<double, double>>> cells_by_class;
    for (std::size_t iy = 0; iy < grid.height; ++iy) {
        for (std::size_t ix = 0; ix < grid.width; ++ix) {
            const std::uint8_t c = preds[iy * grid.width + ix];
            if (c >= cells_by_class.size()) cells_by_class.resize(c + 1);
            cells_by_class[c].emplace_back(grid.cell_x1(ix), grid.cell_x2(iy));
        }
    }

    MarginStats stats;
    stats.per_class_mean.assign(points.class_count, 0.0);
    std::vector<std::size_t> counts(points.class_count, 0);
    double total = 0.0;
    std::size_t total_count = 0;

    for (std::size_t i = 0; i < points.size(); ++i) {
        auto s = points.sample(i);
        const std::size_t pred = model.predict(points.sample_tensor(i));
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cells_by_class.size(); ++c) {
            if (c == pred) continue;
            for (const auto& [cx, cy] : cells_by_class[c]) {
                const double d1 = cx - s[0];
                const double d2 = cy - s[1];
                const double sq = d1 * d1 + d2 * d2;
                if (sq < best) best = sq;
            }
        }
        if (!std::isfinite(best)) continue; // single-class raster: no opposite cell
        const double dist = std::sqrt(best);
        stats.per_class_mean[points.y[i]] += dist;
        counts[points.y[i]] += 1;
        total += dist;
        ++total_count;
    }
    for (std::size_t c = 0; c < stats.per_class_mean.size(); ++c) {
        if (counts[c] > 0) stats.per_class_mean[c] /= static_cast<double>(counts[c]);
    }
    stats.overall_mean = total_count > 0 ? total / static_cast<double>(total_count) : 0.0;
    return stats;
}

void write_margin_csv(const MarginStats& stats, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write margin csv to " + path.string());
    os << "class,mean_margin\n";
    char buf[48];
    for (std::size_t c = 0; c < stats.per_class_mean.size(); ++c) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", c, stats.per_class_mean[c]);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "all,%.17g\n", stats.overall_mean);
    os << buf;
}

} // namespace paglab::cli
