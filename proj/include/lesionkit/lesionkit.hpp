#pragma once

// Umbrella header: the whole toolkit in one include.

#include "lesionkit/cli.hpp"
#include "lesionkit/components.hpp"
#include "lesionkit/config.hpp"
#include "lesionkit/ensemble.hpp"
#include "lesionkit/inference.hpp"
#include "lesionkit/losses.hpp"
#include "lesionkit/metrics.hpp"
#include "lesionkit/nifti.hpp"
#include "lesionkit/postprocess.hpp"
#include "lesionkit/preprocess.hpp"
#include "lesionkit/util.hpp"
#include "lesionkit/volume.hpp"
