#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qwise/error.hpp"
#include "qwise/spin_dynamics.hpp"

namespace qwise {

// Acquisition descriptor stored in the JSON sidecar next to a stack file.
struct AcquisitionMetadata {
    SignalMode mode = SignalMode::ramsey;
    double drive_frequency_hz = 0.0;
    double drive_eta_hz = 0.0;
    double drive_offset_hz = 0.0;  // detuning of the drive from the unperturbed resonance
    double ms_a_per_m = 0.0;
    double standoff_m = 0.0;
    double pixel_pitch_m = 1e-6;
    std::uint64_t seed = 0;

    friend bool operator==(const AcquisitionMetadata&, const AcquisitionMetadata&) = default;
};

// width x height x frames of normalized photoluminescence, frame-major and
// row-major within a frame.
class ImageStack {
public:
    ImageStack() = default;
    ImageStack(std::size_t width, std::size_t height, TimeGrid grid, AcquisitionMetadata meta = {})
        : width_(width), height_(height), grid_(grid), meta_(meta), data_(width * height * grid.n, 0.0) {
        grid.validate();
        if (width == 0 || height == 0) throw ContractError("image stack needs a non-empty frame");
    }

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t frames() const noexcept { return grid_.n; }
    std::size_t pixels() const noexcept { return width_ * height_; }
    const TimeGrid& time_grid() const noexcept { return grid_; }
    const AcquisitionMetadata& metadata() const noexcept { return meta_; }
    AcquisitionMetadata& metadata() noexcept { return meta_; }

    double& at(std::size_t ix, std::size_t iy, std::size_t frame) {
        return data_[frame * pixels() + iy * width_ + ix];
    }
    double at(std::size_t ix, std::size_t iy, std::size_t frame) const {
        return data_[frame * pixels() + iy * width_ + ix];
    }

    std::vector<double> trace(std::size_t ix, std::size_t iy) const {
        std::vector<double> out(frames());
        for (std::size_t f = 0; f < frames(); ++f) out[f] = at(ix, iy, f);
        return out;
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    friend bool operator==(const ImageStack&, const ImageStack&) = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    TimeGrid grid_{};
    AcquisitionMetadata meta_{};
    std::vector<double> data_;
};

}  // namespace qwise
