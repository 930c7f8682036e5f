#pragma once

#include "paglab/dataset.hpp"
#include "paglab/mlp.hpp"

#include <filesystem>
#include <vector>

namespace paglab::cli {

struct GridSpec {
    double x1_min = -60.0;
    double x1_max = 60.0;
    double x2_min = -120.0;
    double x2_max = 120.0;
    std::size_t width = 600;
    std::size_t height = 600;

    void validate() const;
    double cell_x1(std::size_t ix) const;
    double cell_x2(std::size_t iy) const; // iy = 0 is the top row (largest x2)
};

/// argmax predictions on the grid, row-major from the top-left cell.
std::vector<std::uint8_t> evaluate_grid(const MlpModel& model, const GridSpec& grid);

void write_ppm(const std::vector<std::uint8_t>& preds, const GridSpec& grid,
               const std::filesystem::path& path);
void write_grid_csv(const std::vector<std::uint8_t>& preds, const GridSpec& grid,
                    const std::filesystem::path& path);
void write_points_csv(const MlpModel& model, const Dataset& points, const std::filesystem::path& path);

struct MarginStats {
    std::vector<double> per_class_mean; // indexed by true label
    double overall_mean = 0.0;
};

/// Mean distance from each test point to the nearest grid cell whose
/// prediction differs from the model's prediction at that point.
MarginStats margin_statistics(const MlpModel& model, const Dataset& points,
                              const std::vector<std::uint8_t>& preds, const GridSpec& grid);

void write_margin_csv(const MarginStats& stats, const std::filesystem::path& path);

} // namespace paglab::cli
