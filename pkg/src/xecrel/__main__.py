from xecrel.cli import entry

entry()
