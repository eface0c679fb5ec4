#pragma once

#include "otslot/bench.hpp"
#include "otslot/checkpoint.hpp"
#include "otslot/costs.hpp"
#include "otslot/diag.hpp"
#include "otslot/emd.hpp"
#include "otslot/entropy.hpp"
#include "otslot/error.hpp"
#include "otslot/hungarian.hpp"
#include "otslot/io.hpp"
#include "otslot/layers.hpp"
#include "otslot/mesh.hpp"
#include "otslot/ops.hpp"
#include "otslot/plot.hpp"
#include "otslot/random.hpp"
#include "otslot/sinkhorn.hpp"
#include "otslot/slot_attention.hpp"
#include "otslot/tensor.hpp"
