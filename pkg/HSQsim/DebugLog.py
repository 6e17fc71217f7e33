#
#    hsqsim - Hyper-sphere gradient quantization and federated SGD simulator
#    Copyright (C) 2026  The hsqsim developers
#
#    This program is free software; you can redistribute it and/or modify
#    it under the terms of the GNU General Public License as published by
#    the Free Software Foundation; either version 2 of the License, or
#    (at your option) any later version.
#
#    This program is distributed in the hope that it will be useful,
#    but WITHOUT ANY WARRANTY; without even the implied warranty of
#    MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
#    GNU General Public License for more details.
#
#    You should have received a copy of the GNU General Public License
#    along with this program; if not, write to the Free Software
#    Foundation, Inc., 51 Franklin Street, Fifth Floor,
#      Boston, MA  02110-1301  USA

#
# Debug logging for the whole package.  Silent unless a file is attached,
# either with setFile() or with "hsqsim --debug FILE".
#

import logging

class DebugLog:
    def __init__(self, name):
        self.name = name
        self.logger = logging.getLogger(name)
        self.logger.addHandler(logging.NullHandler())
        self.handler = None
        return

    def setFile(self, filename, level=logging.DEBUG):
        if (self.handler):
            self.logger.removeHandler(self.handler)
            self.handler.close()
            pass
        self.handler = logging.FileHandler(filename, mode="w")
        self.handler.setFormatter(
            logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        self.logger.addHandler(self.handler)
        self.logger.setLevel(level)
        return

    # Send a string to the debug log
    def _log(self, str, *args):
        self.logger.debug(str, *args)
        return

    def info(self, str, *args):
        self.logger.info(str, *args)
        return

    def warn(self, str, *args):
        self.logger.warning(str, *args)
        return

    pass

debuglog = DebugLog("hsqsim")
