#pragma once

#include "bmdrom/errors.hpp"
#include "bmdrom/linalg.hpp"
#include "bmdrom/parallel.hpp"
#include "bmdrom/snapshots.hpp"
#include "bmdrom/reduced_model.hpp"
#include "bmdrom/plant.hpp"
#include "bmdrom/gramians.hpp"
#include "bmdrom/rom_dmdc.hpp"
#include "bmdrom/rom_iorom.hpp"
#include "bmdrom/rom_bmd.hpp"
#include "bmdrom/lpv.hpp"
#include "bmdrom/signals.hpp"
#include "bmdrom/mpc.hpp"
#include "bmdrom/io.hpp"
#include "bmdrom/study.hpp"
