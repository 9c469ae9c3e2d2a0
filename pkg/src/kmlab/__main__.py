from kmlab.cli import main

main()
