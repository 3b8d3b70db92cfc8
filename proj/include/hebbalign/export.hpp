// Copyright 2026 The hebbalign Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace hebbalign {

// Figure-ready CSV bundles, one per figure family:
//   alignment_vs_gamma.csv  run_id,activation,gamma,sigma,eta,batch,layer,metric,mean,std,converged,collapsed
//   heatmap.csv             sigma,gamma,alignment,alignment_std,val_loss
//   window_series.csv       run_id,step,layer,metric,value,window_mean,window_std
//   neuron_raster.csv       run_id,step,layer,neuron,value
//   loss_vs_alignment.csv   run_id,gamma,sigma,alignment,val_loss
inline constexpr const char* kAlignmentVsGammaHeader =
    "run_id,activation,gamma,sigma,eta,batch,layer,metric,mean,std,converged,collapsed";
inline constexpr const char* kHeatmapHeader = "sigma,gamma,alignment,alignment_std,val_loss";
inline constexpr const char* kWindowSeriesHeader =
    "run_id,step,layer,metric,value,window_mean,window_std";
inline constexpr const char* kNeuronRasterHeader = "run_id,step,layer,neuron,value";
inline constexpr const char* kLossVsAlignmentHeader = "run_id,gamma,sigma,alignment,val_loss";

// `dir` is a sweep output dir (with sweep.json) or a single run dir (with
// summary.json). Bundles go to out_dir (default dir/export); failed runs are
// skipped. Throws DataError listing every absent run dir.
std::vector<std::filesystem::path> export_bundles(const std::filesystem::path& dir,
                                                  const std::filesystem::path& out_dir = {});

}  // namespace hebbalign
