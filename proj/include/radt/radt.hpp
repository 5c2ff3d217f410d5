#pragma once

// Umbrella header.

#include "radt/rng.hpp"
#include "radt/tensor.hpp"
#include "radt/autodiff.hpp"
#include "radt/functional.hpp"
#include "radt/optim.hpp"
#include "radt/params.hpp"
#include "radt/attention.hpp"
#include "radt/global_focal.hpp"
#include "radt/losses.hpp"
#include "radt/augment.hpp"
#include "radt/student_teacher.hpp"
#include "radt/gaze_hva.hpp"
#include "radt/metrics.hpp"
#include "radt/config.hpp"
#include "radt/image_io.hpp"
#include "radt/dataset.hpp"
#include "radt/checkpoint.hpp"
#include "radt/trainer.hpp"
