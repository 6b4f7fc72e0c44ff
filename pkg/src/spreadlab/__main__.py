from spreadlab.cli import main

main()
