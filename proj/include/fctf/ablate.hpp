#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fctf/metrics.hpp"
#include "fctf/trainer.hpp"

namespace fctf::ablate {

struct AblationOptions {
  int steps = 200;
  int eval_clips = 8;           // test clips evaluated per run; all when negative
  int grid_frames = 8;
  std::vector<nets::TemporalMode> temporal{nets::TemporalMode::Conv1d, nets::TemporalMode::Lstm, nets::TemporalMode::Off};
  std::vector<nets::DiscriminatorMode> discriminator{nets::DiscriminatorMode::Image, nets::DiscriminatorMode::Video};
  std::vector<loss::OrthoMode> ortho{loss::OrthoMode::Hadamard, loss::OrthoMode::Cosine, loss::OrthoMode::Off};
};

struct AblationRow {
  nets::TemporalMode temporal = nets::TemporalMode::Conv1d;
  nets::DiscriminatorMode discriminator = nets::DiscriminatorMode::Image;
  loss::OrthoMode ortho = loss::OrthoMode::Hadamard;
  int steps = 0;
  loss::LossBreakdown final_losses;
  metrics::EvalReport report;
  double grid_ratio = 0.0;
  double seconds = 0.0;
};

inline constexpr const char* kCsvHeader =
    "temporal_fusion,discriminator,ortho_mode,steps,final_rec,final_total,ssim,ms_ssim,psnr,lmd,lse_c,grid_ratio,seconds";

/// Trains every (temporal, discriminator, ortho) combination from `base` for
/// opt.steps steps under base.seed, each in its own subdirectory of out_dir.
std::vector<AblationRow> run_matrix(const train::TrainConfig& base, const data::Dataset& ds, const aux::AuxNets& aux,
                                    const AblationOptions& opt, const std::filesystem::path& out_dir);
std::string to_csv(const std::vector<AblationRow>& rows);

}  // namespace fctf::ablate
