#pragma once

// Umbrella header for the contrastive ECG representation-learning library.

#include "ecgcl/augment.hpp"
#include "ecgcl/autodiff.hpp"
#include "ecgcl/config.hpp"
#include "ecgcl/contrastive.hpp"
#include "ecgcl/data.hpp"
#include "ecgcl/models.hpp"
#include "ecgcl/optim.hpp"
#include "ecgcl/rng.hpp"
#include "ecgcl/serialize.hpp"
#include "ecgcl/sweep.hpp"
#include "ecgcl/tensor.hpp"
#include "ecgcl/train.hpp"
#include "ecgcl/wfdb.hpp"
