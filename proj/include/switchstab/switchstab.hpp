#pragma once

#include "switchstab/errors.hpp"
#include "switchstab/core.hpp"
#include "switchstab/integrate.hpp"
#include "switchstab/signals.hpp"
#include "switchstab/lyapunov.hpp"
#include "switchstab/limiting.hpp"
#include "switchstab/stability.hpp"
#include "switchstab/systems.hpp"
#include "switchstab/io.hpp"
#include "switchstab/experiment.hpp"
